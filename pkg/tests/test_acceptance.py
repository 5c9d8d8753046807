"""Acceptance checks, one test per criterion, at full size.

Every test prints a single PASS/FAIL line (also collected in the terminal
summary).  Runtimes are measured on whatever cores are available.
"""

import math
import time

import numpy as np
import pytest

from coalesce_lab import analytic as an
from coalesce_lab import harness
from coalesce_lab import pfaffian as pf
from coalesce_lab import simulator as sim
from coalesce_lab.analytic import FlowParams
from coalesce_lab.harness import ExperimentSpec, Kind, SimTemplate
from coalesce_lab.pfaffian import PointConfig

pytestmark = pytest.mark.acceptance

SIGMA_SQ = (3 - 2 * math.sqrt(2)) / math.sqrt(math.pi)
RW = SimTemplate("RandomWalk")
GB = SimTemplate("GaussBridge", dt_factor=1e-4)


def test_01_closed_form_consistency(record_criterion):
    start = time.perf_counter()
    worst = 0.0
    for t in np.geomspace(0.01, 100, 5):
        for u in np.geomspace(0.01, 1000, 10):
            p = FlowParams(float(t), float(u))
            m2 = an.second_moment_clusters(p)
            rhs = m2 - an.mean_clusters(p) ** 2
            worst = max(worst, abs(an.var_clusters(p) - rhs) / abs(rhs))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 1.0
    record_criterion(1, ok, f"max rel err {worst:.2e} over 50 cells, {elapsed:.2f}s")
    assert ok


def test_02_pfaffian_correctness(record_criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    det_err = rec_err = 0.0
    for i in range(200):
        n = 2 * (1 + i % 6)
        a = rng.standard_normal((n, n))
        a = a - a.T
        p = pf.pfaffian(a)
        det = np.linalg.det(a)
        det_err = max(det_err, abs(p * p - det) / abs(det))
        r = pf.pfaffian_recursive(a)
        rec_err = max(rec_err, abs(p - r) / abs(r))
    blk = np.array([[0, 1 / math.sqrt(math.pi)], [-1 / math.sqrt(math.pi), 0]])
    blk_err = max(abs(pf.pfaffian(np.kron(np.eye(k), blk)) / math.pi ** (-k / 2) - 1) for k in range(1, 7))
    elapsed = time.perf_counter() - start
    ok = det_err <= 1e-8 and rec_err <= 1e-10 and blk_err <= 1e-12 and elapsed < 10
    record_criterion(2, ok, f"Pf^2 vs det {det_err:.1e}, vs recursive {rec_err:.1e}, "
                            f"block-diagonal {blk_err:.1e}, {elapsed:.2f}s")
    assert ok


def test_03_two_point_density(record_criterion):
    start = time.perf_counter()
    worst = 0.0
    grid = np.linspace(-2.0, 2.0, 20)
    for t in (0.5, 1.0, 4.0):
        for v1 in grid:
            for v2 in grid:
                if v1 == v2:
                    continue
                got = pf.rho_n(PointConfig.from_unsorted(t, (v1, v2)))
                worst = max(worst, abs(got - an.pair_density(t, v1, v2)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 1.0
    record_criterion(3, ok, f"max abs err {worst:.1e} on 3 x 20x20 grids, {elapsed:.2f}s")
    assert ok


def test_04_quadrature_vs_closed_form(record_criterion):
    start = time.perf_counter()
    errs = [harness.quadrature_check(1.0, u)[2] for u in (0.5, 1.0, 2.0, 5.0)]
    elapsed = time.perf_counter() - start
    ok = max(errs) <= 1e-7 and elapsed < 30
    record_criterion(4, ok, f"max rel err {max(errs):.1e}, {elapsed:.2f}s")
    assert ok


def test_05_simulator_mean_variance(record_criterion):
    start = time.perf_counter()
    spec = dict(flow=FlowParams(1.0, 10.0), replicas=4000, cells=((1.0, 10.0),))
    parts = []
    ok = True
    for name, tmpl in (("GaussBridge", GB), ("RandomWalk", RW)):
        rep = harness.run(ExperimentSpec(Kind.VARIANCE_CHECK, sim=tmpl, **spec))
        row = rep.rows[0]
        ok &= rep.verdicts["t=1,u=10 mean"] and rep.verdicts["t=1,u=10 variance"]
        parts.append(f"{name} mean {row.est_mean:.4f} vs {row.extra['mean_exact']:.4f}, "
                     f"var {row.est_var:.4f} vs {row.extra['var_exact']:.4f}")
    elapsed = time.perf_counter() - start
    ok = ok and elapsed <= 600
    record_criterion(5, ok, "; ".join(parts) + f", {elapsed:.0f}s")
    assert ok


def test_06_clt(record_criterion):
    start = time.perf_counter()
    rep = harness.run(ExperimentSpec(Kind.CLT, FlowParams(1.0, 256.0), RW, replicas=10_000,
                                     n_grid=(16, 64, 256)))
    elapsed = time.perf_counter() - start
    last = rep.rows[-1]
    v = rep.verdicts
    ok = v["ks_monotone"] and v["ks_final_le_0.02"] and v["var_per_length_within_5pct"] and elapsed <= 1200
    ks = ", ".join(f"{r.ks_stat:.4f}" for r in rep.rows)
    record_criterion(6, ok, f"KS at n=16,64,256: {ks} (monotone {v['ks_monotone']}, "
                            f"mid-atom {last.extra['ks_mid']:.4f}); var/n {last.extra['var_per_length']:.5f} "
                            f"vs {SIGMA_SQ:.5f}, {elapsed:.0f}s")
    assert ok


def test_07_berry_esseen_shape(record_criterion):
    start = time.perf_counter()
    rep = harness.run(ExperimentSpec(Kind.BERRY_ESSEEN, FlowParams(1.0, 1024.0), RW, replicas=4000,
                                     n_grid=(16, 64, 256, 1024)))
    elapsed = time.perf_counter() - start
    norm = [r.extra["normalized"] for r in rep.rows]
    ok = (rep.verdicts["normalized_max_over_min_le_10"] and rep.verdicts["ks_last_below_first"]
          and elapsed <= 1800)
    record_criterion(7, ok, f"D_n sqrt(n)/log(n)^2: {', '.join(f'{x:.4f}' for x in norm)} "
                            f"(max/min {max(norm) / min(norm):.2f}), D_1024 {rep.rows[-1].ks_stat:.4f} "
                            f"< D_16 {rep.rows[0].ks_stat:.4f}, {elapsed:.0f}s")
    assert ok


def test_08_duality(record_criterion):
    start = time.perf_counter()
    rep = harness.run(ExperimentSpec(Kind.DUALITY, FlowParams(1.0, 5.0), replace_margin(RW, 6.0),
                                     replicas=10_000))
    elapsed = time.perf_counter() - start
    a, b = rep.rows
    ok = rep.verdicts["tv_below_threshold"] and elapsed <= 600
    record_criterion(8, ok, f"TV {a.tv_stat:.4f} < threshold {a.threshold:.4f}; means {a.est_mean:.4f} / "
                            f"{b.est_mean:.4f}, {elapsed:.0f}s")
    assert ok


def test_09_scaling(record_criterion):
    start = time.perf_counter()
    rep = harness.run(ExperimentSpec(Kind.SCALING, FlowParams(4.0, 8.0), GB, replicas=10_000))
    elapsed = time.perf_counter() - start
    g = rep.rows[2]
    ok = rep.verdicts["random_walk_identical"] and rep.verdicts["gauss_bridge_tv_below_threshold"] and elapsed <= 600
    record_criterion(9, ok, f"walk identical {rep.verdicts['random_walk_identical']}; GaussBridge TV "
                            f"{g.tv_stat:.4f} vs threshold {g.threshold:.4f}, {elapsed:.0f}s")
    assert ok


def test_10_additivity(record_criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(10)
    cfg = RW.config(1.0, 5.0, seed=10)
    exact = 0
    for r in range(1000):
        st = sim.run_to_horizon(cfg.replica(r))
        for k in rng.integers(1, cfg.n_interval, size=3):
            exact += sim.check_additivity(st, k * cfg.spacing)
    elapsed = time.perf_counter() - start
    ok = exact == 3000 and elapsed < 60
    record_criterion(10, ok, f"{exact}/3000 splits exact, {elapsed:.1f}s")
    assert ok


def test_11_moment_asymptotics(record_criterion):
    start = time.perf_counter()
    p = FlowParams(1e-4, 1.0)
    k2 = p.t * (an.second_moment_clusters(p) - 3 * an.mean_clusters(p) + 2)
    k2_err = abs(k2 * math.pi - 1)
    k3 = pf.moment_limit_check(3, 1.0, [0.5, 0.1, 0.05])
    target = math.pi ** -1.5
    monotone = all(abs(b - target) < abs(a - target) for a, b in zip(k3, k3[1:]))
    k3_err = abs(k3[-1] / target - 1)
    elapsed = time.perf_counter() - start
    ok = k2_err <= 0.02 and monotone and k3_err <= 0.15 and elapsed <= 300
    record_criterion(11, ok, f"k=2 off {k2_err:.2%}; k=3 {', '.join(f'{x:.4f}' for x in k3)} -> {target:.4f} "
                             f"(monotone {monotone}, final off {k3_err:.1%}), {elapsed:.1f}s")
    assert ok


def test_12_small_t(record_criterion):
    start = time.perf_counter()
    rep = harness.run(ExperimentSpec(Kind.SMALL_T, FlowParams(1e-4, 1.0), RW, replicas=10_000,
                                     t_sequence=(1e-2, 1e-3, 1e-4)))
    elapsed = time.perf_counter() - start
    last = rep.rows[-1]
    ok = rep.verdicts["mean_within_3se"] and rep.verdicts["variance_within_10pct"] and elapsed <= 900
    record_criterion(12, ok, f"mean {last.est_mean:.4f} vs {last.extra['mean_exact']:.4f} "
                             f"(SE {last.extra['se_mean']:.4f}); var {last.est_var:.4f} vs {SIGMA_SQ:.4f}; "
                             f"{rep.notes[0]}, {elapsed:.0f}s")
    assert ok


def replace_margin(tmpl: SimTemplate, margin_factor: float) -> SimTemplate:
    return SimTemplate(tmpl.backend, tmpl.spacing_factor, tmpl.dt_factor, margin_factor)
