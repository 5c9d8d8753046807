"""Experiments built on the simulator: CLT, Berry-Esseen shape, duality,
scaling, small-t behaviour and moment checks.

Every experiment takes an :class:`ExperimentSpec` and returns an
:class:`ExperimentReport` with one row per cell and a dict of pass/fail
verdicts.  Replica batches are memoized per configuration within a process,
and because replica ``r`` always uses the random streams of ``(seed, r)`` a
smaller request is served by a prefix of a larger cached batch.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.special import ndtr

from . import analytic, pfaffian, stats
from .analytic import FlowParams
from .errors import ConfigurationError, DomainError
from .simulator import Backend, BatchResult, SimConfig, simulate_batch

KS_TOLERANCE = 0.02
VAR_TOLERANCE = 0.05
MEAN_BIAS = 0.01
SMALL_T_VAR_TOLERANCE = 0.10
BE_RATIO_LIMIT = 10.0
QUAD_TOLERANCE = 1e-7
MONOTONE_SE = 2.0
MIN_REPLICAS = 100
WARN_REPLICAS = 1000
DUALITY_MARGIN = 6.0
SIGMA_SQ_UNIT = (3.0 - 2.0 * math.sqrt(2.0)) / math.sqrt(math.pi)


class Kind(str, Enum):
    CLT = "Clt"
    BERRY_ESSEEN = "BerryEsseen"
    DUALITY = "Duality"
    SCALING = "Scaling"
    SMALL_T = "SmallT"
    VARIANCE_CHECK = "VarianceCheck"


@dataclass(frozen=True)
class SimTemplate:
    """How a cell ``(t, u)`` becomes a :class:`SimConfig`.

    Lengths scale with ``sqrt(t)`` and times with ``t``: spacing
    ``spacing_factor * sqrt(t)`` (nudged to divide u), margin
    ``margin_factor * sqrt(t)`` and, for GaussBridge, ``dt = dt_factor * t``
    (``None`` keeps the simulator default ``(spacing/4)^2``).
    """

    backend: Backend = Backend.RANDOM_WALK
    spacing_factor: float = 0.005
    dt_factor: float | None = None
    margin_factor: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "backend", Backend.parse(self.backend))
        if not self.spacing_factor > 0:
            raise DomainError("spacing_factor must be > 0")
        if self.dt_factor is not None and not self.dt_factor > 0:
            raise DomainError("dt_factor must be > 0")
        if not self.margin_factor >= 0:
            raise DomainError("margin_factor must be >= 0")

    def config(self, t: float, u: float, seed: int, *, margin_factor: float | None = None,
               backend=None) -> SimConfig:
        backend = self.backend if backend is None else Backend.parse(backend)
        mf = self.margin_factor if margin_factor is None else margin_factor
        target = self.spacing_factor * math.sqrt(t)
        spacing = u / max(1, math.ceil(u / target - 1e-9))
        dt = None
        if backend is Backend.GAUSS_BRIDGE and self.dt_factor is not None:
            dt = self.dt_factor * t
        return SimConfig(u, t, spacing, backend, dt, mf * math.sqrt(t), seed)


@dataclass(frozen=True)
class ExperimentSpec:
    kind: Kind
    flow: FlowParams
    sim: SimTemplate = field(default_factory=SimTemplate)
    replicas: int = 10_000
    n_grid: tuple = ()
    t_sequence: tuple = ()
    cells: tuple = ()
    seed: int = 0
    output_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "n_grid", tuple(self.n_grid))
        object.__setattr__(self, "t_sequence", tuple(float(t) for t in self.t_sequence))
        object.__setattr__(self, "cells", tuple((float(t), float(u)) for t, u in self.cells))
        if self.replicas < 1:
            raise ConfigurationError("replicas must be >= 1")
        if self.replicas < MIN_REPLICAS:
            raise ConfigurationError(f"distributional experiments need >= {MIN_REPLICAS} replicas")
        if self.replicas < WARN_REPLICAS:
            warnings.warn(f"{self.replicas} replicas is below {WARN_REPLICAS}; "
                          "distributional verdicts will be noisy", stacklevel=3)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["sim"]["backend"] = self.sim.backend.value
        d.pop("output_path")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ReportRow:
    cell: str
    n: float | None = None
    t: float | None = None
    est_mean: float | None = None
    est_var: float | None = None
    ks_stat: float | None = None
    tv_stat: float | None = None
    threshold: float | None = None
    runtime: float = 0.0
    seed: int = 0
    config_hash: str = ""
    extra: dict = field(default_factory=dict)


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    rows: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def summary_lines(self) -> list[str]:
        out = [f"{self.spec.kind.value} [{self.spec.config_hash()}]"]
        out += [f"  {'PASS' if ok else 'FAIL'}  {name}" for name, ok in self.verdicts.items()]
        out += [f"  note: {n}" for n in self.notes]
        return out


# batches

_CACHE: dict[str, BatchResult] = {}


def clear_cache() -> None:
    _CACHE.clear()


def _prefix(b: BatchResult, m: int) -> BatchResult:
    if b.nu.size == m:
        return b
    return BatchResult(b.config, b.replicas[:m], b.nu[:m], b.n_in_interval[:m],
                       b.block_counts[:m], b.elapsed * m / b.nu.size)


def run_batch(cfg: SimConfig, replicas: int, *, engine: str | None = None,
              threads: int | None = None) -> BatchResult:
    """Replicas ``0..replicas-1`` of ``cfg``, memoized per configuration."""
    key = cfg.replica(0).config_hash()
    hit = _CACHE.get(key)
    if hit is not None and hit.nu.size >= replicas:
        return _prefix(hit, replicas)
    res = simulate_batch(cfg, replicas, engine=engine, threads=threads)
    _CACHE[key] = res
    return res


def _check_kind(spec: ExperimentSpec, kind: Kind) -> None:
    if spec.kind is not kind:
        raise ConfigurationError(f"expected a {kind.value} spec, got {spec.kind.value}")


def _cell_error(cell: str, exc: Exception) -> ConfigurationError:
    return ConfigurationError(f"cell {cell}: {exc}")


def _ks_rows(spec: ExperimentSpec, engine, threads) -> list[ReportRow]:
    t = spec.flow.t
    s2 = analytic.sigma_sq(t)
    rows = []
    for n in spec.n_grid:
        if not n > 0:
            raise ConfigurationError(f"interval lengths must be > 0, got {n!r}")
        cell = f"n={n}"
        try:
            cfg = spec.sim.config(t, float(n), spec.seed)
            b = run_batch(cfg, spec.replicas, engine=engine, threads=threads)
        except (ConfigurationError, DomainError) as exc:
            raise _cell_error(cell, exc) from exc
        nu = b.nu.astype(float)
        mean = analytic.mean_clusters(FlowParams(t, float(n)))
        z = (nu - mean) / math.sqrt(n)
        ks = stats.ks_to_normal(z, 0.0, s2)
        se_ks = stats.ks_bootstrap_se(z, 0.0, s2, seed=spec.seed)
        mom = stats.moments(nu)
        nblk = b.block_counts.shape[1]
        identity = bool(np.all(b.block_counts.sum(axis=1) == b.nu + nblk - 1)) if nblk else True
        rows.append(ReportRow(
            cell, n=n, t=t, est_mean=mom.mean, est_var=mom.variance, ks_stat=ks.statistic,
            runtime=b.elapsed, seed=spec.seed, config_hash=cfg.config_hash(),
            extra={
                "ks_se": se_ks,
                "ks_mid": _ks_mid(z, s2),
                "mean_exact": mean,
                "se_mean": mom.se_mean,
                "var_per_length": mom.variance / n,
                "se_var_per_length": mom.se_variance / n,
                "sigma_sq": s2,
                "block_identity": identity,
                "blocks": b.block_counts if nblk >= 4 else None,
            },
        ))
    return rows


def _ks_mid(z: np.ndarray, s2: float) -> float:
    """KS distance with the empirical CDF read at the middle of each atom."""
    vals, counts = np.unique(z, return_counts=True)
    above = np.cumsum(counts) / z.size
    mid = above - 0.5 * counts / z.size
    return float(np.max(np.abs(mid - ndtr(vals / math.sqrt(s2)))))


def _monotone(rows: list[ReportRow]) -> bool:
    for a, b in zip(rows, rows[1:]):
        slack = MONOTONE_SE * math.hypot(a.extra["ks_se"], b.extra["ks_se"])
        if b.ks_stat > a.ks_stat + slack:
            return False
    return True


def _autocov(rows: list[ReportRow]) -> None:
    """Attach the pooled block autocovariance to the widest cell."""
    row = max((r for r in rows if r.extra.get("blocks") is not None), key=lambda r: r.n, default=None)
    if row is None:
        return
    blocks = row.extra["blocks"]
    lags = min(8, blocks.shape[1] - 1)
    gam = stats.autocovariance(blocks, lags)
    noise = gam[0] / math.sqrt(blocks.shape[0] * blocks.shape[1])
    row.extra["autocov"] = [float(g) for g in gam]
    # lags >= 3 should sit at the noise level, well below lag 1
    row.extra["autocov_decay"] = bool(np.all(np.abs(gam[3:]) <= max(abs(gam[1]), 4.0 * noise)))


def _strip_blocks(rows: list[ReportRow]) -> None:
    for r in rows:
        r.extra.pop("blocks", None)


def run_clt(spec: ExperimentSpec, *, engine: str | None = None, threads: int | None = None) -> ExperimentReport:
    """KS distance of ``(nu - E nu) / sqrt(n)`` to ``N(0, sigma_t^2)`` per n."""
    _check_kind(spec, Kind.CLT)
    if not spec.n_grid:
        raise ConfigurationError("n_grid is empty")
    rows = _ks_rows(spec, engine, threads)
    _autocov(rows)
    _strip_blocks(rows)
    last = rows[-1]
    rep = ExperimentReport(spec, rows)
    rep.verdicts["ks_monotone"] = _monotone(rows)
    rep.verdicts[f"ks_final_le_{KS_TOLERANCE:g}"] = last.ks_stat <= KS_TOLERANCE
    rep.verdicts["var_per_length_within_5pct"] = (
        abs(last.extra["var_per_length"] / last.extra["sigma_sq"] - 1.0) <= VAR_TOLERANCE
    )
    rep.verdicts["block_identity"] = all(r.extra["block_identity"] for r in rows)
    rep.notes.append(
        "lattice atoms of the integer count put a floor of about half an atom "
        f"under the KS distance; mid-atom KS at n={last.n}: {last.extra['ks_mid']:.4f}"
    )
    return rep


def run_berry_esseen(spec: ExperimentSpec, *, engine: str | None = None,
                     threads: int | None = None) -> ExperimentReport:
    """Shape of ``D_n`` against ``n^(-1/2) (log n)^2``; never estimates C."""
    _check_kind(spec, Kind.BERRY_ESSEEN)
    ns = list(spec.n_grid)
    if len(ns) < 4 or min(ns) <= 1 or max(ns) < 16 * min(ns):
        raise ConfigurationError("n_grid needs >= 4 points > 1 spanning a factor of 16")
    rows = _ks_rows(spec, engine, threads)
    _strip_blocks(rows)
    for r in rows:
        r.extra["normalized"] = r.ks_stat * math.sqrt(r.n) / math.log(r.n) ** 2
    norm = [r.extra["normalized"] for r in rows]
    ratio = max(norm) / min(norm) if min(norm) > 0 else math.inf
    rep = ExperimentReport(spec, rows)
    rep.verdicts["ks_monotone"] = _monotone(rows)
    rep.verdicts[f"normalized_max_over_min_le_{BE_RATIO_LIMIT:g}"] = ratio <= BE_RATIO_LIMIT
    rep.verdicts["ks_last_below_first"] = rows[-1].ks_stat < rows[0].ks_stat
    rep.notes.append(f"normalized max/min = {ratio:.3f}")
    return rep


def run_duality_check(spec: ExperimentSpec, *, engine: str | None = None,
                      threads: int | None = None) -> ExperimentReport:
    """``nu[0,u]`` against ``1 + N[0,u]`` from independent batches."""
    _check_kind(spec, Kind.DUALITY)
    t, u = spec.flow.t, spec.flow.u
    mf = spec.sim.margin_factor
    if mf < DUALITY_MARGIN:
        raise ConfigurationError(f"margin must be >= {DUALITY_MARGIN:g} sqrt(t), got {mf:g} sqrt(t)")
    a_cfg = spec.sim.config(t, u, spec.seed, margin_factor=0.0)
    b_cfg = spec.sim.config(t, u, spec.seed + 1, margin_factor=mf)
    rep = ExperimentReport(spec)
    if t < 10 * a_cfg.step_time:
        rep.notes.append(f"skipped: t={t:g} is below 10 time steps, nothing has mixed yet")
        return rep
    a = run_batch(a_cfg, spec.replicas, engine=engine, threads=threads)
    b = run_batch(b_cfg, spec.replicas, engine=engine, threads=threads)
    sa, sb = a.nu, b.n_in_interval + 1
    tv, thr = stats.two_sample_tv(sa, sb, seed=spec.seed)
    exact = analytic.mean_clusters(spec.flow)
    for label, x, cfg, bt in (("nu", sa, a_cfg, a), ("N+1", sb, b_cfg, b)):
        mom = stats.moments(x)
        rep.rows.append(ReportRow(label, n=u, t=t, est_mean=mom.mean, est_var=mom.variance,
                                  tv_stat=tv, threshold=thr, runtime=bt.elapsed, seed=cfg.seed,
                                  config_hash=cfg.config_hash(),
                                  extra={"mean_exact": exact, "se_mean": mom.se_mean}))
    rep.verdicts["tv_below_threshold"] = tv < thr
    return rep


def run_scaling_check(spec: ExperimentSpec, *, engine: str | None = None,
                      threads: int | None = None) -> ExperimentReport:
    """``(t, u)`` against ``(1, u / sqrt(t))`` for both backends.

    The walk is compared path by path with matched seeds.  The Gaussian scheme
    is compared in law, with an independent seed for the rescaled arm (matched
    seeds would give the same paths up to rounding and test nothing).
    """
    _check_kind(spec, Kind.SCALING)
    t, u = spec.flow.t, spec.flow.u
    eps = 1.0 / math.sqrt(t)
    rep = ExperimentReport(spec)

    rw = spec.sim.config(t, u, spec.seed, backend=Backend.RANDOM_WALK)
    rw1 = rw.scaled(eps)
    b0 = run_batch(rw, spec.replicas, engine=engine, threads=threads)
    b1 = run_batch(rw1, spec.replicas, engine=engine, threads=threads)
    same = bool(np.array_equal(b0.nu, b1.nu))
    for label, cfg, b in (("RandomWalk t", rw, b0), ("RandomWalk t=1", rw1, b1)):
        mom = stats.moments(b.nu)
        rep.rows.append(ReportRow(label, n=cfg.u, t=cfg.t, est_mean=mom.mean, est_var=mom.variance,
                                  runtime=b.elapsed, seed=cfg.seed, config_hash=cfg.config_hash(),
                                  extra={"identical": same}))
    rep.verdicts["random_walk_identical"] = same

    gb = spec.sim.config(t, u, spec.seed, backend=Backend.GAUSS_BRIDGE)
    gb1 = replace(gb.scaled(eps), seed=spec.seed + 1)
    g0 = run_batch(gb, spec.replicas, engine=engine, threads=threads)
    g1 = run_batch(gb1, spec.replicas, engine=engine, threads=threads)
    tv, thr = stats.two_sample_tv(g0.nu, g1.nu, seed=spec.seed)
    for label, cfg, b in (("GaussBridge t", gb, g0), ("GaussBridge t=1", gb1, g1)):
        mom = stats.moments(b.nu)
        rep.rows.append(ReportRow(label, n=cfg.u, t=cfg.t, est_mean=mom.mean, est_var=mom.variance,
                                  tv_stat=tv, threshold=thr, runtime=b.elapsed, seed=cfg.seed,
                                  config_hash=cfg.config_hash()))
    rep.verdicts["gauss_bridge_tv_below_threshold"] = tv < thr
    return rep


def run_small_t_corollary(spec: ExperimentSpec, *, engine: str | None = None,
                          threads: int | None = None) -> ExperimentReport:
    """``X_t = t^(1/4) nu_t[0,1] - t^(-1/4) / sqrt(pi)`` along decreasing t.

    The exact mean of ``X_t`` is ``t^(1/4)``, so the limit law is centred at 0.
    KS distances to both ``N(0, s^2)`` and ``N(1, s^2)`` are reported.
    """
    _check_kind(spec, Kind.SMALL_T)
    ts = list(spec.t_sequence)
    if not ts:
        raise ConfigurationError("t_sequence is empty")
    if any(b >= a for a, b in zip(ts, ts[1:])):
        raise ConfigurationError("t_sequence must be strictly decreasing")
    rep = ExperimentReport(spec)
    for t in ts:
        cell = f"t={t:g}"
        cfg = spec.sim.config(t, 1.0, spec.seed)
        if t < 100 * cfg.step_time:
            raise ConfigurationError(f"cell {cell}: t is below 100 time steps ({cfg.step_time:g})")
        b = run_batch(cfg, spec.replicas, engine=engine, threads=threads)
        q = t ** 0.25
        x = q * b.nu - 1.0 / (q * math.sqrt(math.pi))
        mom = stats.moments(x)
        ks0 = stats.ks_to_normal(x, 0.0, SIGMA_SQ_UNIT).statistic
        ks1 = stats.ks_to_normal(x, 1.0, SIGMA_SQ_UNIT).statistic
        rep.rows.append(ReportRow(cell, n=1.0, t=t, est_mean=mom.mean, est_var=mom.variance,
                                  ks_stat=ks0, runtime=b.elapsed, seed=spec.seed,
                                  config_hash=cfg.config_hash(),
                                  extra={"mean_exact": q, "se_mean": mom.se_mean,
                                         "se_var": mom.se_variance, "ks_mean_one": ks1,
                                         "sigma_sq": SIGMA_SQ_UNIT}))
    last = rep.rows[-1]
    rep.verdicts["mean_within_3se"] = abs(last.est_mean - last.extra["mean_exact"]) <= 3 * last.extra["se_mean"]
    rep.verdicts["variance_within_10pct"] = abs(last.est_var / SIGMA_SQ_UNIT - 1.0) <= SMALL_T_VAR_TOLERANCE
    winner = "0" if last.ks_stat < last.extra["ks_mean_one"] else "1"
    rep.notes.append(
        f"limit mean {winner} fits better at t={last.t:g}: KS to N(0,s2) = {last.ks_stat:.4f}, "
        f"to N(1,s2) = {last.extra['ks_mean_one']:.4f}"
    )
    return rep


def quadrature_check(t: float, u: float) -> tuple[float, float, float]:
    """``(quadrature, closed form, relative error)`` for the second factorial moment."""
    p = FlowParams(t, u)
    exact = analytic.second_moment_clusters(p) - 3.0 * analytic.mean_clusters(p) + 2.0
    q = pfaffian.factorial_moment(2, p).value
    rel = abs(q - exact) / abs(exact) if exact else abs(q)
    return q, exact, rel


def run_variance_check(spec: ExperimentSpec, *, engine: str | None = None,
                       threads: int | None = None) -> ExperimentReport:
    """Per ``(t, u)`` cell: MC mean and variance, and quadrature against closed form."""
    _check_kind(spec, Kind.VARIANCE_CHECK)
    cells = spec.cells or ((spec.flow.t, spec.flow.u),)
    rep = ExperimentReport(spec)
    for t, u in cells:
        cell = f"t={t:g},u={u:g}"
        p = FlowParams(t, u)
        if u == 0:
            rep.rows.append(ReportRow(cell, n=0.0, t=t, est_mean=1.0, est_var=0.0, seed=spec.seed,
                                      extra={"mean_exact": 1.0, "var_exact": 0.0, "trivial": True}))
            continue
        start = time.perf_counter()
        q, exact2, rel = quadrature_check(t, u)
        cfg = spec.sim.config(t, u, spec.seed)
        b = run_batch(cfg, spec.replicas, engine=engine, threads=threads)
        mom = stats.moments(b.nu)
        mean, var = analytic.mean_clusters(p), analytic.var_clusters(p)
        ok_mean = abs(mom.mean - mean) <= max(3 * mom.se_mean, MEAN_BIAS * mean)
        ok_var = abs(mom.variance / var - 1.0) <= VAR_TOLERANCE
        ok_quad = rel <= QUAD_TOLERANCE
        rep.rows.append(ReportRow(cell, n=u, t=t, est_mean=mom.mean, est_var=mom.variance,
                                  runtime=time.perf_counter() - start, seed=spec.seed,
                                  config_hash=cfg.config_hash(),
                                  extra={"mean_exact": mean, "var_exact": var, "se_mean": mom.se_mean,
                                         "se_var": mom.se_variance, "quad": q, "quad_exact": exact2,
                                         "quad_rel_err": rel}))
        rep.verdicts[f"{cell} mean"] = ok_mean
        rep.verdicts[f"{cell} variance"] = ok_var
        rep.verdicts[f"{cell} quadrature"] = ok_quad
    return rep


RUNNERS = {
    Kind.CLT: run_clt,
    Kind.BERRY_ESSEEN: run_berry_esseen,
    Kind.DUALITY: run_duality_check,
    Kind.SCALING: run_scaling_check,
    Kind.SMALL_T: run_small_t_corollary,
    Kind.VARIANCE_CHECK: run_variance_check,
}


def run(spec: ExperimentSpec, **kw) -> ExperimentReport:
    return RUNNERS[spec.kind](spec, **kw)
