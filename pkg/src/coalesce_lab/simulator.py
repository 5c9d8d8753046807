"""Monte Carlo of coalescing Brownian particles started from a finite grid.

Particles start at ``-a, -a + delta, ..., 0, ..., u, ..., u + a`` and move
independently until they meet; from then on they move together.  Clusters are
tracked with a union-find forest indexed by grid position, rooted at the
leftmost grid index of each cluster.

Two backends:

``RandomWalk``
    Coalescing simple random walks on the lattice ``(delta/2) * Z``.  Grid
    sites are every other lattice site, each step moves every cluster by
    ``+-delta/2`` and takes time ``delta^2/4``.  Neighbours stay an even
    number of lattice units apart, so they meet exactly instead of jumping
    over each other, and the law of a pair is the lattice analogue of two
    independent Brownian motions.

``GaussBridge``
    Gaussian increments of variance ``dt`` with a Brownian-bridge correction
    for meetings between steps (see ``_sim_numba.gb_step``).

The hot loops live in ``_sim_numba`` (numba) and ``_sim_numpy`` (numpy); the
engine is picked per call or by the ``COALESCE_LAB_NO_NUMBA`` flag.
"""

from __future__ import annotations

import hashlib
import json
import math
import time as _time
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np

from . import _sim_numba as nb
from . import _sim_numpy as npk
from ._accel import resolve_engine, set_threads
from .errors import ConfigurationError, ContractViolation, DomainError, SizeError
from .rng import STREAM_BRIDGE, STREAM_INCREMENT, STREAM_WALK, stream_key, stream_keys

MAX_GRID = 10_000_000
MAX_SEED = (1 << 64) - 1
RESIDUAL_LIMIT = 0.01
DEFAULT_SPACING_FACTOR = 0.005
DEFAULT_MARGIN_FACTOR = 6.0
_INDEX_TOL = 1e-9


class Backend(str, Enum):
    RANDOM_WALK = "RandomWalk"
    GAUSS_BRIDGE = "GaussBridge"

    @classmethod
    def parse(cls, value) -> "Backend":
        if isinstance(value, cls):
            return value
        key = str(value).replace("-", "").replace("_", "").lower()
        for b in cls:
            if b.value.lower() == key:
                return b
        if key in ("rw", "walk"):
            return cls.RANDOM_WALK
        if key in ("gb", "bridge", "gauss"):
            return cls.GAUSS_BRIDGE
        raise ConfigurationError(f"unknown backend {value!r}")


def _as_index(x: float, what: str) -> int:
    k = round(x)
    if abs(x - k) > _INDEX_TOL * max(1.0, abs(x)):
        raise ConfigurationError(f"{what} is not a whole number of grid steps ({x!r})")
    return int(k)


@dataclass(frozen=True)
class SimConfig:
    """One simulation cell.  ``margin`` is rounded up to whole grid steps."""

    u: float
    t: float
    spacing: float
    backend: Backend = Backend.RANDOM_WALK
    dt: float | None = None
    margin: float = 0.0
    seed: int = 0
    replica_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "backend", Backend.parse(self.backend))
        for name in ("u", "t", "spacing"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")
        if not (math.isfinite(self.margin) and self.margin >= 0):
            raise DomainError(f"margin must be finite and >= 0, got {self.margin!r}")
        if self.spacing > self.u * (1 + 1e-12):
            raise ConfigurationError("spacing must not exceed u")
        _as_index(self.u / self.spacing, "u")
        if isinstance(self.seed, bool) or not 0 <= int(self.seed) <= MAX_SEED or int(self.seed) != self.seed:
            raise DomainError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if int(self.replica_index) != self.replica_index or self.replica_index < 0:
            raise DomainError(f"replica_index must be a non-negative integer, got {self.replica_index!r}")
        if self.backend is Backend.RANDOM_WALK:
            if self.dt is not None:
                raise ConfigurationError("the RandomWalk backend derives its step time; leave dt unset")
        elif self.dt is not None and not (math.isfinite(self.dt) and self.dt > 0):
            raise DomainError(f"dt must be finite and > 0, got {self.dt!r}")

    @classmethod
    def with_defaults(
        cls,
        u: float,
        t: float,
        backend=Backend.RANDOM_WALK,
        *,
        spacing: float | None = None,
        dt: float | None = None,
        margin: float = 0.0,
        seed: int = 0,
        replica_index: int = 0,
    ) -> "SimConfig":
        """Fill in ``spacing ~ 0.005 sqrt(t)`` (nudged to divide u)."""
        if spacing is None:
            if not (u > 0 and t > 0):
                raise DomainError("u and t must be > 0")
            target = DEFAULT_SPACING_FACTOR * math.sqrt(t)
            spacing = u / max(1, math.ceil(u / target - _INDEX_TOL))
        return cls(u, t, spacing, Backend.parse(backend), dt, margin, seed, replica_index)

    # geometry

    @property
    def n_interval(self) -> int:
        """Grid steps inside ``[0, u]``."""
        return _as_index(self.u / self.spacing, "u")

    @property
    def n_margin(self) -> int:
        return max(0, math.ceil(self.margin / self.spacing - _INDEX_TOL))

    @property
    def n_grid(self) -> int:
        return self.n_interval + 1 + 2 * self.n_margin

    @property
    def origin_index(self) -> int:
        """Grid index of the start point 0."""
        return self.n_margin

    def origins(self) -> np.ndarray:
        return (np.arange(self.n_grid) - self.n_margin) * self.spacing

    def block_edges(self) -> np.ndarray:
        """Grid indices of ``0, 1, ..., floor(u)`` (nearest grid points)."""
        nblk = int(math.floor(self.u + _INDEX_TOL))
        k = np.arange(nblk + 1)
        return (self.origin_index + np.rint(k / self.spacing)).astype(np.int64)

    # time

    @property
    def step_time(self) -> float:
        if self.backend is Backend.RANDOM_WALK:
            return 0.25 * self.spacing ** 2
        return self.dt if self.dt is not None else (0.25 * self.spacing) ** 2

    @property
    def n_steps(self) -> int:
        h = self.step_time
        if self.backend is Backend.RANDOM_WALK:
            return int(math.floor(self.t / h + _INDEX_TOL))
        return max(1, int(math.ceil(self.t / h - _INDEX_TOL)))

    @property
    def last_step_time(self) -> float:
        """GaussBridge: length of the final, possibly shortened, step."""
        return self.t - (self.n_steps - 1) * self.step_time

    @property
    def residual_time(self) -> float:
        if self.backend is Backend.RANDOM_WALK:
            return max(0.0, self.t - self.n_steps * self.step_time)
        return 0.0

    def check_reachable(self) -> None:
        if self.residual_time > RESIDUAL_LIMIT * self.t:
            raise ConfigurationError(
                f"t={self.t} is not reachable with lattice step time {self.step_time:g} "
                f"(residual {self.residual_time:g}); use a smaller spacing"
            )

    def check_size(self) -> None:
        if self.n_grid > MAX_GRID:
            raise SizeError(f"grid of {self.n_grid} particles exceeds the cap of {MAX_GRID}")

    # derived configs

    def replica(self, index: int) -> "SimConfig":
        return replace(self, replica_index=index)

    def scaled(self, eps: float) -> "SimConfig":
        """The config seen through ``(t, u) -> (eps^2 t, eps u)``."""
        if not (math.isfinite(eps) and eps > 0):
            raise DomainError("eps must be finite and > 0")
        return replace(
            self,
            u=eps * self.u,
            t=eps * eps * self.t,
            spacing=eps * self.spacing,
            dt=None if self.dt is None else eps * eps * self.dt,
            margin=eps * self.n_margin * self.spacing,
        )

    def refined(self) -> "SimConfig":
        """Same cell on a grid of half the spacing (same margin)."""
        return replace(self, spacing=0.5 * self.spacing, margin=self.n_margin * self.spacing)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["backend"] = self.backend.value
        return d

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("replica_index")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ParticleSystem:
    """Mutable state of one replica.

    ``state`` holds the surviving representatives in increasing order: lattice
    integers for RandomWalk, space positions for GaussBridge.  ``rep_ids`` are
    their grid indices, which double as cluster ids.
    """

    config: SimConfig
    origin: np.ndarray
    state: np.ndarray
    rep_ids: np.ndarray
    parent: np.ndarray
    time: float = 0.0
    steps: int = 0
    keys: dict = field(default_factory=dict, repr=False)

    @property
    def positions(self) -> np.ndarray:
        cfg = self.config
        if cfg.backend is Backend.RANDOM_WALK:
            return (0.5 * self.state - cfg.origin_index) * cfg.spacing
        return self.state

    @property
    def n_clusters(self) -> int:
        return int(self.rep_ids.size)

    def labels(self) -> np.ndarray:
        """Cluster id of every grid index."""
        return npk.labels_from_parent(self.parent)

    def cluster_of(self, index: int) -> int:
        r = int(index)
        while self.parent[r] != r:
            r = int(self.parent[r])
        return r


@dataclass
class PathStats:
    nu: int
    n_in_interval: int
    block_counts: np.ndarray
    residual_time: float
    config: SimConfig
    system: ParticleSystem | None = field(default=None, repr=False)

    def to_record(self) -> dict:
        return {
            "replica": self.config.replica_index,
            "nu": int(self.nu),
            "n_in_interval": int(self.n_in_interval),
            "block_counts": [int(b) for b in self.block_counts],
        }


@dataclass(frozen=True)
class BatchResult:
    config: SimConfig
    replicas: np.ndarray
    nu: np.ndarray
    n_in_interval: np.ndarray
    block_counts: np.ndarray
    elapsed: float


def _keys(cfg: SimConfig) -> dict:
    if cfg.backend is Backend.RANDOM_WALK:
        return {"walk": stream_key(cfg.seed, cfg.replica_index, STREAM_WALK)}
    return {
        "inc": stream_key(cfg.seed, cfg.replica_index, STREAM_INCREMENT),
        "br": stream_key(cfg.seed, cfg.replica_index, STREAM_BRIDGE),
    }


def _interval_bounds(cfg: SimConfig) -> tuple[float, float]:
    """Bounds of ``[0, u]`` in the units of ``ParticleSystem.state``."""
    if cfg.backend is Backend.RANDOM_WALK:
        i0 = cfg.origin_index
        return float(2 * i0), float(2 * (i0 + cfg.n_interval))
    return 0.0, float(cfg.u)


def init(cfg: SimConfig) -> ParticleSystem:
    """One particle per grid point, one cluster per particle, time 0."""
    cfg.check_size()
    n = cfg.n_grid
    origin = cfg.origins()
    if cfg.backend is Backend.RANDOM_WALK:
        state = 2 * np.arange(n, dtype=np.int64)
    else:
        state = origin.copy()
    return ParticleSystem(
        config=cfg,
        origin=origin,
        state=state,
        rep_ids=np.arange(n, dtype=np.int64),
        parent=np.arange(n, dtype=np.int64),
        keys=_keys(cfg),
    )


def step_random_walk(s: ParticleSystem, engine: str | None = None) -> ParticleSystem:
    """Advance by one lattice step (time ``spacing^2 / 4``), in place."""
    if s.config.backend is not Backend.RANDOM_WALK:
        raise ContractViolation("step_random_walk needs the RandomWalk backend")
    key = s.keys["walk"]
    if resolve_engine(engine) == "numba":
        m = nb.rw_step(s.state, s.rep_ids, s.parent, s.state.size, s.steps, np.uint64(key))
        s.state, s.rep_ids = s.state[:m], s.rep_ids[:m]
    else:
        s.state, s.rep_ids = npk.rw_step(s.state, s.rep_ids, s.parent, s.steps, key)
    s.steps += 1
    s.time = s.steps * s.config.step_time
    return s


def step_gauss_bridge(s: ParticleSystem, dt: float | None = None, engine: str | None = None) -> ParticleSystem:
    """Advance by one Gaussian step of length ``dt``, in place."""
    if s.config.backend is not Backend.GAUSS_BRIDGE:
        raise ContractViolation("step_gauss_bridge needs the GaussBridge backend")
    dt = s.config.step_time if dt is None else dt
    if not (math.isfinite(dt) and dt > 0):
        raise DomainError(f"dt must be finite and > 0, got {dt!r}")
    ki, kb = s.keys["inc"], s.keys["br"]
    if resolve_engine(engine) == "numba":
        scratch = np.empty(s.state.size)
        m = nb.gb_step(s.state, s.rep_ids, s.parent, s.state.size, s.steps, dt,
                       np.uint64(ki), np.uint64(kb), scratch)
        s.state, s.rep_ids = s.state[:m], s.rep_ids[:m]
    else:
        s.state, s.rep_ids = npk.gb_step(s.state, s.rep_ids, s.parent, s.steps, dt, ki, kb)
    s.steps += 1
    s.time += dt
    return s


def path_stats(s: ParticleSystem) -> PathStats:
    """Horizon statistics of a system at its current time."""
    cfg = s.config
    i0 = cfg.origin_index
    lo, hi = _interval_bounds(cfg)
    nu, n_in, blocks = npk.summarize(
        s.labels(), np.asarray(s.state, dtype=float), i0, i0 + cfg.n_interval,
        cfg.block_edges(), lo, hi,
    )
    return PathStats(nu, n_in, blocks, max(0.0, cfg.t - s.time) if cfg.backend is Backend.RANDOM_WALK
                     else 0.0, cfg, s)


def _check_invariants(s: ParticleSystem, prev_clusters: int) -> None:
    if s.state.size > 1 and not np.all(np.diff(s.state) > 0):
        raise AssertionError(f"positions out of order at step {s.steps}")
    if s.n_clusters > prev_clusters:
        raise AssertionError(f"cluster count increased at step {s.steps}")
    if np.any(s.parent > np.arange(s.parent.size)):
        raise AssertionError("union-find forest lost its left-rooted shape")


def run_to_horizon(cfg: SimConfig, *, engine: str | None = None, debug: bool = False) -> PathStats:
    """Simulate one replica up to time ``t``.

    ``debug=True`` steps from Python and asserts ordering and monotone
    coalescence after every step; otherwise the whole run is one kernel call
    (block-jumping for the walk).  Both give the same result.
    """
    cfg.check_size()
    cfg.check_reachable()
    eng = resolve_engine(engine)
    s = init(cfg)
    if debug:
        prev = s.n_clusters
        for k in range(cfg.n_steps):
            if cfg.backend is Backend.RANDOM_WALK:
                step_random_walk(s, eng)
            else:
                h = cfg.last_step_time if k == cfg.n_steps - 1 else cfg.step_time
                step_gauss_bridge(s, h, eng)
            _check_invariants(s, prev)
            prev = s.n_clusters
        if cfg.backend is Backend.GAUSS_BRIDGE:
            s.time = cfg.t
        return path_stats(s)

    mod = nb if eng == "numba" else npk
    if cfg.backend is Backend.RANDOM_WALK:
        state, rid, parent = mod.rw_run(cfg.n_grid, cfg.n_steps, np.uint64(s.keys["walk"]))
    else:
        state, rid, parent = mod.gb_run(s.state, cfg.n_steps, cfg.step_time, cfg.last_step_time,
                                        np.uint64(s.keys["inc"]), np.uint64(s.keys["br"]))
    s.state, s.rep_ids, s.parent = state, rid, parent
    s.steps = cfg.n_steps
    s.time = cfg.n_steps * cfg.step_time if cfg.backend is Backend.RANDOM_WALK else cfg.t
    return path_stats(s)


def simulate_batch(
    cfg: SimConfig,
    replicas: int,
    *,
    first_replica: int = 0,
    engine: str | None = None,
    threads: int | None = None,
) -> BatchResult:
    """Run replicas ``first_replica .. first_replica + replicas - 1`` of ``cfg``.

    Replica r uses the random streams of ``(cfg.seed, r)``, so any split of a
    batch into pieces reproduces the same numbers.
    """
    if replicas < 1:
        raise DomainError("replicas must be >= 1")
    cfg.check_size()
    cfg.check_reachable()
    eng = resolve_engine(engine)
    idx = np.arange(first_replica, first_replica + replicas)
    i0 = cfg.origin_index
    lo_pos, hi_pos = _interval_bounds(cfg)
    edges = cfg.block_edges()
    args = (i0, i0 + cfg.n_interval, edges, lo_pos, hi_pos)
    start = _time.perf_counter()
    if eng == "numba":
        set_threads(threads)
        mod = nb
    else:
        mod = npk
    if cfg.backend is Backend.RANDOM_WALK:
        keys = stream_keys(cfg.seed, idx, STREAM_WALK)
        out = mod.rw_batch(cfg.n_grid, cfg.n_steps, keys, *args)
    else:
        ki = stream_keys(cfg.seed, idx, STREAM_INCREMENT)
        kb = stream_keys(cfg.seed, idx, STREAM_BRIDGE)
        out = mod.gb_batch(cfg.origins(), cfg.n_steps, cfg.step_time, cfg.last_step_time, ki, kb, *args)
    nu, n_in, blocks = out
    return BatchResult(cfg, idx, nu, n_in, blocks, _time.perf_counter() - start)


def nu_between(labels: np.ndarray, first: int, last: int) -> int:
    """Clusters among grid indices ``first..last`` (clusters are contiguous)."""
    seg = labels[first:last + 1]
    return 1 + int(np.count_nonzero(seg[1:] != seg[:-1]))


def check_additivity(stats: PathStats, split: float) -> bool:
    """Check ``nu[0,u] + 1 == nu[0,split] + nu[split,u]`` on the stored path."""
    if stats.system is None:
        raise ContractViolation("PathStats carries no particle system")
    cfg = stats.config
    j = split / cfg.spacing
    k = round(j)
    if abs(j - k) > _INDEX_TOL * max(1.0, abs(j)):
        raise ContractViolation(f"split {split!r} is not a grid point")
    if not 0 < k < cfg.n_interval:
        raise ContractViolation(f"split {split!r} is not strictly inside (0, u)")
    labels = stats.system.labels()
    a = cfg.origin_index
    b = a + cfg.n_interval
    m = a + int(k)
    return nu_between(labels, a, b) + 1 == nu_between(labels, a, m) + nu_between(labels, m, b)


def coupled_refinement(cfg: SimConfig, *, engine: str | None = None) -> tuple[int, int]:
    """``(nu_coarse, nu_fine)`` from one run on the refined grid.

    The coarse grid is the even-offset subset of the fine grid, and the coarse
    particles are the fine particles started there, so ``nu_coarse <= nu_fine``
    holds on every path.
    """
    fine = run_to_horizon(cfg.refined(), engine=engine)
    labels = fine.system.labels()
    fcfg = fine.config
    a = fcfg.origin_index
    coarse = labels[a:a + fcfg.n_interval + 1:2]
    return 1 + int(np.count_nonzero(coarse[1:] != coarse[:-1])), int(fine.nu)
