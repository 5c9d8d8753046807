import json
import math

import numpy as np
import pytest

from coalesce_lab import cli, harness, report
from coalesce_lab.analytic import FlowParams
from coalesce_lab.errors import ConfigurationError
from coalesce_lab.harness import ExperimentSpec, Kind, SimTemplate

pytestmark = pytest.mark.filterwarnings("ignore:.*replicas is below")

COARSE = SimTemplate(spacing_factor=0.05)
COARSE_GB = SimTemplate("GaussBridge", spacing_factor=0.05, dt_factor=1e-3)


def spec(kind, flow=(1.0, 4.0), **kw):
    kw.setdefault("sim", COARSE)
    kw.setdefault("replicas", 200)
    return ExperimentSpec(kind, FlowParams(*flow), **kw)


@pytest.fixture(autouse=True)
def fresh_cache():
    harness.clear_cache()
    yield
    harness.clear_cache()


def test_replica_floor_and_warning():
    with pytest.raises(ConfigurationError):
        spec(Kind.CLT, replicas=99)
    with pytest.warns(UserWarning):
        ExperimentSpec(Kind.CLT, FlowParams(1.0, 4.0), replicas=500)


def test_template_config():
    cfg = SimTemplate(spacing_factor=0.01, margin_factor=2.0).config(4.0, 3.0, seed=7)
    assert cfg.spacing == pytest.approx(0.02) and cfg.margin == pytest.approx(4.0) and cfg.seed == 7
    gb = SimTemplate("GaussBridge", dt_factor=1e-4).config(4.0, 3.0, 0)
    assert gb.dt == pytest.approx(4e-4)


def test_clt_report_shape():
    rep = harness.run(spec(Kind.CLT, flow=(1.0, 8.0), n_grid=(2, 8)))
    assert [r.n for r in rep.rows] == [2, 8]
    assert set(rep.verdicts) == {"ks_monotone", "ks_final_le_0.02", "var_per_length_within_5pct",
                                 "block_identity"}
    assert rep.verdicts["block_identity"]
    assert all(0 <= r.ks_stat <= 1 for r in rep.rows)
    assert "blocks" not in rep.rows[-1].extra and "autocov" in rep.rows[-1].extra


def test_berry_esseen_needs_wide_grid():
    with pytest.raises(ConfigurationError):
        harness.run(spec(Kind.BERRY_ESSEEN, n_grid=(2, 4, 8, 16)))
    with pytest.raises(ConfigurationError):
        harness.run(spec(Kind.BERRY_ESSEEN, n_grid=(2, 32)))


def test_duality_margin_and_skip():
    with pytest.raises(ConfigurationError):
        harness.run(spec(Kind.DUALITY, sim=SimTemplate(spacing_factor=0.05, margin_factor=3.0)))
    rep = harness.run(spec(Kind.DUALITY, flow=(1e-6, 1.0),
                           sim=SimTemplate(spacing_factor=10.0, margin_factor=6.0)))
    assert rep.verdicts == {} and "skipped" in rep.notes[0]


def test_duality_runs():
    rep = harness.run(spec(Kind.DUALITY, sim=SimTemplate(spacing_factor=0.05, margin_factor=6.0)))
    assert [r.cell for r in rep.rows] == ["nu", "N+1"]
    assert rep.rows[0].seed != rep.rows[1].seed
    assert "tv_below_threshold" in rep.verdicts


def test_scaling_random_walk_identical():
    rep = harness.run(spec(Kind.SCALING, flow=(4.0, 4.0), sim=COARSE_GB))
    assert rep.verdicts["random_walk_identical"]
    assert rep.rows[1].t == pytest.approx(1.0) and rep.rows[1].n == pytest.approx(2.0)


def test_small_t_contracts():
    with pytest.raises(ConfigurationError):
        harness.run(spec(Kind.SMALL_T, t_sequence=(1e-3, 1e-2)))
    with pytest.raises(ConfigurationError):
        harness.run(spec(Kind.SMALL_T, t_sequence=(1e-2,), sim=SimTemplate(spacing_factor=2.0)))
    rep = harness.run(spec(Kind.SMALL_T, t_sequence=(1e-1, 1e-2)))
    assert rep.rows[-1].extra["mean_exact"] == pytest.approx(0.1 ** 0.5)
    assert "fits better" in rep.notes[0]


def test_variance_check_cells():
    rep = harness.run(spec(Kind.VARIANCE_CHECK, cells=((1.0, 0.0), (1.0, 2.0))))
    assert rep.rows[0].extra["trivial"] and rep.rows[0].est_var == 0.0
    assert rep.verdicts["t=1,u=2 quadrature"]
    assert rep.rows[1].extra["quad_rel_err"] <= harness.QUAD_TOLERANCE


def test_quadrature_check():
    q, exact, rel = harness.quadrature_check(1.0, 3.0)
    assert rel <= 1e-7 and q == pytest.approx(exact, rel=1e-7)


def test_kind_mismatch():
    with pytest.raises(ConfigurationError):
        harness.run_clt(spec(Kind.DUALITY))


def test_cache_serves_prefix():
    cfg = COARSE.config(1.0, 2.0, 3)
    big = harness.run_batch(cfg, 300)
    small = harness.run_batch(cfg, 120)
    np.testing.assert_array_equal(small.nu, big.nu[:120])
    assert harness.run_batch(cfg.replica(0), 300) is big


def test_report_bit_identical_across_runs():
    s = spec(Kind.CLT, flow=(1.0, 4.0), n_grid=(1, 4), seed=5)
    a = report.report_text(harness.run(s))
    harness.clear_cache()
    b = report.report_text(harness.run(s))
    assert a == b
    assert a.startswith("# kind=Clt") and "runtime" not in a.splitlines()[1]
    assert "runtime" in report.report_text(harness.run(s), timings=True)
    lines = report.report_text(harness.run(s), fmt="jsonl").splitlines()
    assert json.loads(lines[0])["header"]["kind"] == "Clt"
    assert "verdicts" in json.loads(lines[-1])


def test_spec_hash_ignores_output_path():
    a = spec(Kind.CLT, n_grid=(4,))
    b = spec(Kind.CLT, n_grid=(4,), output_path="x.csv")
    assert a.config_hash() == b.config_hash() != spec(Kind.CLT, n_grid=(4,), seed=1).config_hash()


# command line

def test_cli_analytic(capsys):
    assert cli.main(["analytic", "--t", "1", "--u", "1", "--format", "jsonl"]) == 0
    out = capsys.readouterr().out.splitlines()
    rec = json.loads(out[-1])
    assert rec["mean"] == pytest.approx(1 + 1 / math.sqrt(math.pi))


def test_cli_density_and_moments(capsys):
    assert cli.main(["density", "--t", "1", "--points", "1,0", "--format", "jsonl"]) == 0
    rec = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert rec["points"] == [0.0, 1.0] and rec["density"] > 0
    assert cli.main(["moments", "--n", "1", "--t", "1", "--u", "2", "--format", "jsonl"]) == 0
    rec = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert rec["value"] == pytest.approx(2 / math.sqrt(math.pi))


def test_cli_simulate_jsonl(tmp_path):
    out = tmp_path / "sim.jsonl"
    args = ["simulate", "--u", "1", "--t", "0.5", "--spacing", "0.05", "--replicas", "5",
            "--seed", "2", "--out", str(out), "--format", "jsonl"]
    assert cli.main(args) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 6 and json.loads(lines[0])["header"]["seed"] == 2
    assert cli.main(args[:-2] + ["--first-replica", "3", "--replicas", "2", "--format", "jsonl"]) == 0
    tail = out.read_text().splitlines()
    assert tail[1:] == lines[4:]


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["analytic", "--t", "-1", "--u", "1"]) == 1
    assert cli.main(["analytic", "--t", "1"]) == 1
    assert cli.main(["no-such-command"]) == 1
    assert cli.main(["--version"]) == 0
    # a CLT run this small fails its KS verdict
    out = tmp_path / "clt.csv"
    code = cli.main(["clt", "--n-grid", "1,4", "--replicas", "100", "--spacing-factor", "0.05",
                     "--out", str(out)])
    assert code == 2 and out.read_text().startswith("# kind=Clt")
    capsys.readouterr()


def test_cli_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# small run\nreplicas = 100\nspacing_factor = 0.05\nn_grid = 1,4\nseed = 3\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cli.main(["clt", "--config", str(cfg), "--out", str(a)])
    cli.main(["clt", "--config", str(cfg), "--seed", "4", "--out", str(b)])
    assert "seed=3" in a.read_text().splitlines()[0]
    assert "seed=4" in b.read_text().splitlines()[0]
    bad = tmp_path / "bad.cfg"
    bad.write_text("replicas 100\n")
    assert cli.main(["clt", "--config", str(bad)]) == 1
