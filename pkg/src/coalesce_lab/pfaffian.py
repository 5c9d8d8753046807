"""Pfaffians and the n-point densities of cluster positions.

The clusters of the Arratia flow at time ``t`` form a Pfaffian point process:
the n-point density at ``v_1 < ... < v_n`` is the Pfaffian of the 2n x 2n
matrix tiled with the 2 x 2 blocks :func:`kernel_block`.  Factorial moments of
the number of clusters inside ``[0, u]`` are integrals of those densities.

Two Pfaffian evaluators are provided: :func:`pfaffian_recursive`, a row
expansion used as an oracle, and :func:`pfaffian`, skew-symmetric Gaussian
elimination with partial pivoting (Parlett-Reid style, O(n^3)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import factorial

import numpy as np

from . import analytic
from ._accel import njit, resolve_engine
from .analytic import FlowParams
from .errors import AccuracyError, ContractViolation, DomainError, SizeError
from .quadrature import QuadratureSpec, simplex_rule

MAX_RECURSIVE_ORDER = 12
MAX_POINTS = 6
NEGATIVE_NOISE = 1e-12

DIAGNOSTICS = {"negative_density_clamps": 0}


def reset_diagnostics() -> None:
    DIAGNOSTICS["negative_density_clamps"] = 0


class SkewMatrix:
    """Even-order real antisymmetric matrix.

    ``SkewMatrix(a)`` demands exact antisymmetry (zero tolerance);
    ``SkewMatrix.from_upper(a)`` reads the strict upper triangle only.
    """

    __slots__ = ("entries",)

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ContractViolation(f"expected a non-empty square matrix, got shape {a.shape}")
        if a.shape[0] % 2:
            raise ContractViolation(f"order must be even, got {a.shape[0]}")
        if not np.array_equal(a, -a.T):
            raise ContractViolation("matrix is not exactly antisymmetric")
        a.setflags(write=False)
        self.entries = a

    @classmethod
    def from_upper(cls, upper) -> "SkewMatrix":
        up = np.triu(np.asarray(upper, dtype=float), 1)
        return cls(up - up.T)

    @property
    def order(self) -> int:
        return self.entries.shape[0]

    def __repr__(self) -> str:
        return f"SkewMatrix(order={self.order})"


def _as_skew(a) -> np.ndarray:
    return a.entries if isinstance(a, SkewMatrix) else SkewMatrix(a).entries


def _pf_expand(a: np.ndarray, idx: tuple) -> float:
    if not idx:
        return 1.0
    first, rest = idx[0], idx[1:]
    total = 0.0
    for pos, j in enumerate(rest):
        entry = a[first, j]
        if entry == 0.0:
            continue
        sign = 1.0 if pos % 2 == 0 else -1.0
        total += sign * entry * _pf_expand(a, rest[:pos] + rest[pos + 1:])
    return total


def pfaffian_recursive(a) -> float:
    """Pfaffian by expansion along the first row (order <= 12)."""
    m = _as_skew(a)
    if m.shape[0] > MAX_RECURSIVE_ORDER:
        raise SizeError(f"recursive Pfaffian is capped at order {MAX_RECURSIVE_ORDER}")
    return _pf_expand(m, tuple(range(m.shape[0])))


@njit
def _pf_eliminate(a):
    # a is overwritten
    n = a.shape[0]
    pf = 1.0
    for k in range(0, n - 1, 2):
        kp = k + 1
        big = abs(a[k + 1, k])
        for i in range(k + 2, n):
            if abs(a[i, k]) > big:
                big = abs(a[i, k])
                kp = i
        if kp != k + 1:
            for j in range(n):
                tmp = a[k + 1, j]
                a[k + 1, j] = a[kp, j]
                a[kp, j] = tmp
            for i in range(n):
                tmp = a[i, k + 1]
                a[i, k + 1] = a[i, kp]
                a[i, kp] = tmp
            pf = -pf
        piv = a[k, k + 1]
        if piv == 0.0:
            return 0.0
        pf *= piv
        for i in range(k + 2, n):
            ti = a[k, i] / piv
            ci = a[i, k + 1]
            for j in range(k + 2, n):
                a[i, j] += ti * a[j, k + 1] - ci * a[k, j] / piv
    return pf


@njit
def _pf_batch_numba(mats):
    out = np.empty(mats.shape[0])
    work = np.empty((mats.shape[1], mats.shape[2]))
    for b in range(mats.shape[0]):
        work[:, :] = mats[b]
        out[b] = _pf_eliminate(work)
    return out


def _pf_batch_numpy(mats: np.ndarray) -> np.ndarray:
    a = np.array(mats, dtype=float, copy=True)
    nb, n = a.shape[0], a.shape[1]
    rows = np.arange(nb)
    pf = np.ones(nb)
    for k in range(0, n - 1, 2):
        kp = k + 1 + np.argmax(np.abs(a[:, k + 1:, k]), axis=1)
        swap = kp != k + 1
        if swap.any():
            pf[swap] = -pf[swap]
            r1 = a[rows, k + 1, :].copy()
            a[rows, k + 1, :] = a[rows, kp, :]
            a[rows, kp, :] = r1
            c1 = a[rows, :, k + 1].copy()
            a[rows, :, k + 1] = a[rows, :, kp]
            a[rows, :, kp] = c1
        piv = a[:, k, k + 1]
        zero = piv == 0.0
        pf = np.where(zero, 0.0, pf * piv)
        if k + 2 < n:
            safe = np.where(zero, 1.0, piv)
            tau = a[:, k, k + 2:] / safe[:, None]
            col = a[:, k + 2:, k + 1]
            a[:, k + 2:, k + 2:] += tau[:, :, None] * col[:, None, :] - col[:, :, None] * tau[:, None, :]
    return pf


def pfaffian_batch(mats: np.ndarray, engine: str | None = None) -> np.ndarray:
    """Pfaffians of a stack (B, n, n) of antisymmetric matrices, n even."""
    mats = np.ascontiguousarray(mats, dtype=float)
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2] or mats.shape[1] % 2:
        raise ContractViolation(f"expected a stack of even-order square matrices, got {mats.shape}")
    if resolve_engine(engine) == "numba":
        return _pf_batch_numba(mats)
    return _pf_batch_numpy(mats)


def pfaffian(a, engine: str | None = None) -> float:
    """Pfaffian by skew-symmetric elimination with partial pivoting."""
    m = _as_skew(a)
    return float(pfaffian_batch(m[None], engine=engine)[0])


# kernel and densities

def kernel_block(t: float, u: float, v: float) -> np.ndarray:
    """2 x 2 matrix kernel ``K_t(u, v)``; the sign factor is 0 at ``u == v``."""
    if not (math.isfinite(t) and t > 0):
        raise DomainError(f"t must be finite and > 0, got {t!r}")
    w = (v - u) / math.sqrt(t)
    block = np.array(
        [
            [-analytic.F2(w), -analytic.F1(w)],
            [analytic.F1(w), np.sign(w) * analytic.F(abs(w))],
        ]
    )
    return block / math.sqrt(t)


def kernel_matrices(t: float, points: np.ndarray) -> np.ndarray:
    """Tiled kernel matrices (B, 2n, 2n) for point sets ``points`` (B, n)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    nb, n = pts.shape
    w = (pts[:, None, :] - pts[:, :, None]) / math.sqrt(t)
    out = np.empty((nb, 2 * n, 2 * n))
    out[:, 0::2, 0::2] = -analytic.F2(w)
    f1 = analytic.F1(w)
    out[:, 0::2, 1::2] = -f1
    out[:, 1::2, 0::2] = f1
    out[:, 1::2, 1::2] = np.sign(w) * analytic.F(np.abs(w))
    out /= math.sqrt(t)
    return out


@dataclass(frozen=True)
class PointConfig:
    """Strictly increasing points ``v_1 < ... < v_n`` at time ``t``."""

    t: float
    points: tuple

    def __post_init__(self):
        if not (math.isfinite(self.t) and self.t > 0):
            raise DomainError(f"t must be finite and > 0, got {self.t!r}")
        pts = tuple(float(v) for v in self.points)
        if not pts:
            raise ContractViolation("at least one point is required")
        if not all(math.isfinite(v) for v in pts):
            raise DomainError("points must be finite")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ContractViolation("points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_unsorted(cls, t: float, points) -> "PointConfig":
        return cls(t, tuple(sorted(float(v) for v in points)))

    @property
    def n(self) -> int:
        return len(self.points)


def _clamp(values: np.ndarray, scale: float) -> np.ndarray:
    neg = values < 0.0
    if not neg.any():
        return values
    if np.any(values < -NEGATIVE_NOISE * scale):
        raise AccuracyError(f"density below -{NEGATIVE_NOISE} (relative); assembly or pivoting failure")
    DIAGNOSTICS["negative_density_clamps"] += int(neg.sum())
    return np.where(neg, 0.0, values)


def _rho_batch(t: float, pts: np.ndarray, engine: str | None = None) -> np.ndarray:
    n = pts.shape[1]
    vals = pfaffian_batch(kernel_matrices(t, pts), engine=engine)
    return _clamp(vals, (math.pi * t) ** (-0.5 * n))


def rho_n(cfg: PointConfig, engine: str | None = None) -> float:
    """n-point density of cluster positions, ``1 <= n <= 6``."""
    if not isinstance(cfg, PointConfig):
        raise ContractViolation("rho_n expects a PointConfig")
    if cfg.n > MAX_POINTS:
        raise SizeError(f"rho_n is capped at {MAX_POINTS} points")
    return float(_rho_batch(cfg.t, np.array([cfg.points]), engine=engine)[0])


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error_estimate: float
    nodes_per_axis: int


def _simplex_integral(n: int, p: FlowParams, spec: QuadratureSpec, engine, chunk=65536) -> float:
    pts, wts = simplex_rule(spec, p.u)
    acc = np.empty(pts.shape[0])
    for lo in range(0, pts.shape[0], chunk):
        acc[lo:lo + chunk] = _rho_batch(p.t, pts[lo:lo + chunk], engine=engine)
    # np.sum is pairwise, hence independent of how the values were produced
    return float(factorial(n) * np.sum(acc * wts))


def factorial_moment(n: int, p: FlowParams, q: QuadratureSpec | None = None,
                     engine: str | None = None) -> QuadratureResult:
    """n-th factorial moment of the number of clusters inside ``[0, u]``.

    The value comes from the doubled rule; ``error_estimate`` is its distance
    to the ``q.nodes_per_axis`` rule.
    """
    if isinstance(n, bool) or int(n) != n or not 1 <= n <= 4:
        raise ContractViolation(f"n must be an integer in 1..4, got {n!r}")
    n = int(n)
    if not isinstance(p, FlowParams):
        p = FlowParams(*p)
    q = QuadratureSpec.default(n) if q is None else q
    if q.dimension != n:
        raise ContractViolation(f"quadrature dimension {q.dimension} does not match n={n}")
    if p.u == 0.0:
        return QuadratureResult(0.0, 0.0, q.nodes_per_axis)
    coarse = _simplex_integral(n, p, q, engine)
    fine = _simplex_integral(n, p, q.doubled(), engine)
    return QuadratureResult(fine, abs(fine - coarse), q.nodes_per_axis)


def moment_limit_check(k: int, u: float, t_sequence, q: QuadratureSpec | None = None,
                       engine: str | None = None) -> list[float]:
    """``t^(k/2)`` times the k-th factorial moment along decreasing ``t``.

    The sequence should approach ``(u / sqrt(pi))^k``.
    """
    if isinstance(k, bool) or int(k) != k or not 1 <= k <= 3:
        raise ContractViolation(f"k must be an integer in 1..3, got {k!r}")
    ts = [float(t) for t in t_sequence]
    if not ts or any(t <= 0 for t in ts):
        raise DomainError("t_sequence must be non-empty and positive")
    if any(b >= a for a, b in zip(ts, ts[1:])):
        raise ContractViolation("t_sequence must be strictly decreasing")
    out = []
    for t in ts:
        res = factorial_moment(int(k), FlowParams(t, u), q, engine=engine)
        if res.error_estimate > 0.1 * abs(res.value):
            raise AccuracyError(
                f"quadrature error {res.error_estimate:.3g} exceeds 10% of {res.value:.3g} at t={t}; "
                "increase nodes_per_axis"
            )
        out.append(t ** (0.5 * k) * res.value)
    return out
