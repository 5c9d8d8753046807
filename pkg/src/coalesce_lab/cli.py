"""``coalesce-lab`` command line.

Exit codes: 0 when every verdict passes, 2 when a verdict fails, 1 on errors.
"""

from __future__ import annotations

import argparse
import contextlib
import math
import sys
import warnings

from . import __version__, analytic, harness, pfaffian, report, simulator, stats
from ._accel import set_threads
from .analytic import FlowParams
from .errors import CoalesceLabError
from .harness import ExperimentSpec, Kind, SimTemplate

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2

GLOBAL_DEFAULTS = {"seed": 0, "threads": None, "out": None, "format": "csv", "config": None,
                   "engine": None, "timings": False}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _cells(text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for part in text.split(","):
        if part.strip():
            t, u = part.split(":")
            out.append((float(t), float(u)))
    return tuple(out)


def _global_parser() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS, allow_abbrev=False)
    g.add_argument("--seed", type=int, help="64-bit seed (default 0)")
    g.add_argument("--threads", type=int, help="numba worker threads (default: all cores)")
    g.add_argument("--out", help="output file (default: stdout)")
    g.add_argument("--format", choices=("csv", "jsonl"), help="output format (default csv)")
    g.add_argument("--config", help="flat key=value file; command-line flags override it")
    g.add_argument("--engine", choices=("numba", "numpy"), help="kernel engine (default: numba)")
    g.add_argument("--timings", action="store_true", help="include run times in the output")
    return g


def _template_args(p: argparse.ArgumentParser, *, backend="RandomWalk", margin=0.0) -> None:
    p.add_argument("--backend", default=backend, choices=("RandomWalk", "GaussBridge"))
    p.add_argument("--spacing-factor", type=float, default=0.005, help="grid spacing / sqrt(t)")
    p.add_argument("--dt-factor", type=float, default=1e-4,
                   help="GaussBridge time step / t (0 keeps (spacing/4)^2)")
    p.add_argument("--margin-factor", type=float, default=margin, help="start-grid margin / sqrt(t)")


def build_parser() -> argparse.ArgumentParser:
    g = _global_parser()
    p = argparse.ArgumentParser(prog="coalesce-lab", parents=[g], allow_abbrev=False,
                                description="Cluster counts of the Arratia flow: closed forms, "
                                            "Pfaffian quadrature and Monte Carlo checks.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analytic", parents=[g], allow_abbrev=False,
                       help="closed-form mean, variance and second moment")
    a.add_argument("--t", type=float, required=True)
    a.add_argument("--u", type=float, required=True)

    d = sub.add_parser("density", parents=[g], allow_abbrev=False,
                       help="n-point density of cluster positions")
    d.add_argument("--t", type=float, required=True)
    d.add_argument("--points", type=_floats, required=True, help="comma-separated positions")

    m = sub.add_parser("moments", parents=[g], allow_abbrev=False,
                       help="factorial moment by quadrature")
    m.add_argument("--n", type=int, required=True)
    m.add_argument("--t", type=float, required=True)
    m.add_argument("--u", type=float, required=True)
    m.add_argument("--nodes", type=int, default=None, help="Gauss-Legendre nodes per axis")

    s = sub.add_parser("simulate", parents=[g], allow_abbrev=False,
                       help="replicas of nu and N (jsonl: per replica, csv: summary)")
    s.add_argument("--u", type=float, required=True)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--spacing", type=float, default=None, help="grid spacing (default 0.005 sqrt(t))")
    s.add_argument("--dt", type=float, default=None, help="GaussBridge time step (default (spacing/4)^2)")
    s.add_argument("--backend", default="RandomWalk", choices=("RandomWalk", "GaussBridge"))
    s.add_argument("--margin", type=float, default=0.0)
    s.add_argument("--replicas", type=int, default=100)
    s.add_argument("--first-replica", type=int, default=0)

    c = sub.add_parser("clt", parents=[g], allow_abbrev=False,
                       help="KS distance to the limit normal law (M=10^4: ~6 min/core)")
    c.add_argument("--t", type=float, default=1.0)
    c.add_argument("--n-grid", type=_ints, default=(16, 64, 256))
    c.add_argument("--replicas", type=int, default=10_000)
    _template_args(c)

    b = sub.add_parser("berry-esseen", parents=[g], allow_abbrev=False,
                       help="shape of the KS decay (~10 min/core)")
    b.add_argument("--t", type=float, default=1.0)
    b.add_argument("--n-grid", type=_ints, default=(16, 64, 256, 1024))
    b.add_argument("--replicas", type=int, default=4000)
    _template_args(b)

    du = sub.add_parser("duality", parents=[g], allow_abbrev=False,
                        help="nu against 1 + N (~1 min/core)")
    du.add_argument("--t", type=float, default=1.0)
    du.add_argument("--u", type=float, default=5.0)
    du.add_argument("--replicas", type=int, default=10_000)
    _template_args(du, margin=6.0)

    sc = sub.add_parser("scaling", parents=[g], allow_abbrev=False,
                        help="(t, u) against (1, u/sqrt(t)) (~1 min/core)")
    sc.add_argument("--t", type=float, default=4.0)
    sc.add_argument("--u", type=float, default=8.0)
    sc.add_argument("--replicas", type=int, default=10_000)
    _template_args(sc)

    st = sub.add_parser("small-t", parents=[g], allow_abbrev=False,
                        help="rescaled cluster count as t decreases (~3 min/core)")
    st.add_argument("--t-sequence", type=_floats, default=(1e-2, 1e-3, 1e-4))
    st.add_argument("--replicas", type=int, default=10_000)
    _template_args(st)

    v = sub.add_parser("variance-check", parents=[g], allow_abbrev=False,
                       help="MC and quadrature against closed forms")
    v.add_argument("--cells", type=_cells, default=((1.0, 10.0), (0.25, 5.0)), help="t:u,t:u,...")
    v.add_argument("--replicas", type=int, default=4000)
    _template_args(v)
    return p


def _config_tokens(path: str) -> list[str]:
    tokens = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CoalesceLabError(f"config line without '=': {raw.strip()!r}")
            key, val = (x.strip() for x in line.split("=", 1))
            flag = "--" + key.replace("_", "-")
            if val.lower() in ("true", "yes", "on"):
                tokens.append(flag)
            elif val.lower() not in ("false", "no", "off"):
                tokens += [flag, val]
    return tokens


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        pos = argv.index(args.command) + 1
        args = parser.parse_args(argv[:pos] + _config_tokens(args.config) + argv[pos:])
    for k, v in GLOBAL_DEFAULTS.items():
        if not hasattr(args, k):
            setattr(args, k, v)
    return args


def _template(args) -> SimTemplate:
    return SimTemplate(args.backend, args.spacing_factor, args.dt_factor or None, args.margin_factor)


def _spec(args) -> ExperimentSpec:
    cmd = args.command
    common = dict(sim=_template(args), replicas=args.replicas, seed=args.seed, output_path=args.out)
    if cmd == "clt":
        return ExperimentSpec(Kind.CLT, FlowParams(args.t, max(args.n_grid)), n_grid=args.n_grid, **common)
    if cmd == "berry-esseen":
        return ExperimentSpec(Kind.BERRY_ESSEEN, FlowParams(args.t, max(args.n_grid)), n_grid=args.n_grid,
                              **common)
    if cmd == "duality":
        return ExperimentSpec(Kind.DUALITY, FlowParams(args.t, args.u), **common)
    if cmd == "scaling":
        return ExperimentSpec(Kind.SCALING, FlowParams(args.t, args.u), **common)
    if cmd == "small-t":
        return ExperimentSpec(Kind.SMALL_T, FlowParams(min(args.t_sequence), 1.0),
                              t_sequence=args.t_sequence, **common)
    t, u = args.cells[0]
    return ExperimentSpec(Kind.VARIANCE_CHECK, FlowParams(t, u), cells=args.cells, **common)


def _records(args) -> tuple[dict, list[dict]]:
    cmd = args.command
    if cmd == "analytic":
        p = FlowParams(args.t, args.u)
        cf = analytic.closed_form_summary(p)
        rec = {"t": p.t, "u": p.u, "mean": cf.mean, "variance": cf.variance,
               "second_moment": cf.second_moment, "sigma_sq": cf.sigma_sq,
               "variance_printed": analytic.var_clusters_printed(p)}
        return {"command": cmd}, [rec]
    if cmd == "density":
        cfg = pfaffian.PointConfig.from_unsorted(args.t, args.points)
        return {"command": cmd}, [{"t": args.t, "points": list(cfg.points),
                                   "density": pfaffian.rho_n(cfg, engine=args.engine)}]
    if cmd == "moments":
        p = FlowParams(args.t, args.u)
        q = None
        if args.nodes is not None:
            q = pfaffian.QuadratureSpec(args.n, args.nodes)
        r = pfaffian.factorial_moment(args.n, p, q, engine=args.engine)
        return {"command": cmd}, [{"n": args.n, "t": p.t, "u": p.u, "value": r.value,
                                   "error_estimate": r.error_estimate, "nodes_per_axis": r.nodes_per_axis}]
    # simulate
    cfg = simulator.SimConfig.with_defaults(args.u, args.t, args.backend, spacing=args.spacing, dt=args.dt,
                                            margin=args.margin, seed=args.seed)
    b = simulator.simulate_batch(cfg, args.replicas, first_replica=args.first_replica,
                                 engine=args.engine, threads=args.threads)
    header = {"command": cmd, "config_hash": cfg.config_hash(), "seed": cfg.seed, "config": cfg.to_dict()}
    if args.format == "jsonl":
        recs = [{"replica": int(r), "nu": int(nu), "n_in_interval": int(n_in), "block_counts": blk}
                for r, nu, n_in, blk in zip(b.replicas, b.nu, b.n_in_interval, b.block_counts)]
        return header, recs
    nu = stats.moments(b.nu) if b.nu.size > 1 else None
    nn = stats.moments(b.n_in_interval) if b.nu.size > 1 else None
    p = FlowParams(cfg.t, cfg.u)
    rec = {"replicas": int(b.nu.size), "mean_nu": float(b.nu.mean()),
           "var_nu": nu.variance if nu else math.nan, "se_mean_nu": nu.se_mean if nu else math.nan,
           "mean_n_in_interval": float(b.n_in_interval.mean()),
           "var_n_in_interval": nn.variance if nn else math.nan,
           "mean_exact": analytic.mean_clusters(p), "var_exact": analytic.var_clusters(p)}
    return header, [rec]


@contextlib.contextmanager
def _sink(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    except (CoalesceLabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        set_threads(args.threads)
        if args.command in ("analytic", "density", "moments", "simulate"):
            header, recs = _records(args)
            with _sink(args.out) as fh:
                report.write_records(recs, fh, header, args.format)
            return EXIT_OK
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            spec = _spec(args)
            rep = harness.run(spec, engine=args.engine, threads=args.threads)
        with _sink(args.out) as fh:
            report.write_report(rep, fh, args.format, args.timings)
        print("\n".join(rep.summary_lines()), file=sys.stderr if args.out is None else sys.stdout)
        return EXIT_OK if rep.passed else EXIT_FAIL
    except (CoalesceLabError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
