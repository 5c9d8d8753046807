"""Closed-form statistics of the cluster count of the Arratia flow.

Notation: ``nu`` is the number of clusters formed at time ``t`` by the
particles started in ``[0, u]``.  All formulas depend on ``(t, u)`` only
through ``s = u / sqrt(t)``; the two incomplete Gaussian integrals that appear
in the moments,

    I(s) = int_0^s exp(-z^2/4) dz = sqrt(pi) * erf(s/2)
    J(s) = int_0^s exp(-z^2/2) dz = sqrt(pi/2) * erf(s/sqrt(2)),

are evaluated through the error function, never by quadrature.

The second moment and the variance are obtained by integrating the two-point
density :func:`pair_density` over ``[0, u]^2`` in closed form.  The printed
variants (``*_printed``) keep a published expression that disagrees with that
integral; they are kept for comparison only and nothing else calls them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

SQRT_PI = math.sqrt(math.pi)
SQRT2 = math.sqrt(2.0)

# beyond this, exp(-x^2/4) and friends are treated as exact zeros
GAUSS_CUTOFF = 40.0


@dataclass(frozen=True)
class FlowParams:
    """Time horizon ``t > 0`` and interval length ``u >= 0``."""

    t: float
    u: float

    def __post_init__(self):
        if not (math.isfinite(self.t) and self.t > 0):
            raise DomainError(f"t must be finite and > 0, got {self.t!r}")
        if not (math.isfinite(self.u) and self.u >= 0):
            raise DomainError(f"u must be finite and >= 0, got {self.u!r}")

    @property
    def scaled_length(self) -> float:
        return self.u / math.sqrt(self.t)


@dataclass(frozen=True)
class ClosedFormSummary:
    mean: float
    variance: float
    second_moment: float
    sigma_sq: float


def _check_finite(z) -> np.ndarray:
    arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("argument must be finite")
    return arr


def _out(arr: np.ndarray, like):
    return float(arr) if np.ndim(like) == 0 else arr


def F(z):
    """``(1/sqrt(pi)) * int_z^inf exp(-r^2/4) dr``, i.e. ``erfc(z/2)``.

    Defined by the same integral for every real ``z``, so ``F(-z) = 2 - F(z)``.
    """
    arr = _check_finite(z)
    return _out(special.erfc(0.5 * arr), z)


def F1(z):
    """First derivative of :func:`F`."""
    arr = _check_finite(z)
    return _out(-np.exp(-0.25 * arr * arr) / SQRT_PI, z)


def F2(z):
    """Second derivative of :func:`F`."""
    arr = _check_finite(z)
    return _out(arr * np.exp(-0.25 * arr * arr) / (2.0 * SQRT_PI), z)


def _gauss(x: float, rate: float) -> float:
    """``exp(-rate * x^2)`` with the cutoff policy applied."""
    return 0.0 if x > GAUSS_CUTOFF else math.exp(-rate * x * x)


def _incomplete(s: float) -> tuple[float, float]:
    return SQRT_PI * math.erf(0.5 * s), math.sqrt(math.pi / 2.0) * math.erf(s / SQRT2)


def _params(p) -> FlowParams:
    if isinstance(p, FlowParams):
        return p
    t, u = p
    return FlowParams(float(t), float(u))


def mean_clusters(p: FlowParams) -> float:
    """Expected cluster count ``1 + u / sqrt(pi t)``."""
    p = _params(p)
    return 1.0 + p.scaled_length / SQRT_PI


def second_moment_clusters(p: FlowParams) -> float:
    p = _params(p)
    s = p.scaled_length
    i_s, j_s = _incomplete(s)
    return (
        1.0
        + 4.0 / math.pi
        + 5.0 * s / SQRT_PI
        + s * s / math.pi
        - 2.0 * i_s / SQRT_PI
        + i_s * i_s / math.pi
        - 4.0 * s * j_s / math.pi
        - 4.0 / math.pi * _gauss(s, 0.5)
    )


def var_clusters(p: FlowParams) -> float:
    """Variance of the cluster count.

    Grows like ``sigma_sq(t) * u`` for large ``u`` and like ``u / sqrt(pi t)``
    for small ``u``.
    """
    p = _params(p)
    s = p.scaled_length
    i_s, j_s = _incomplete(s)
    head = 4.0 / math.pi if s > GAUSS_CUTOFF else -4.0 / math.pi * math.expm1(-0.5 * s * s)
    return head + 3.0 * s / SQRT_PI - 2.0 * i_s / SQRT_PI + i_s * i_s / math.pi - 4.0 * s * j_s / math.pi


def second_moment_clusters_printed(p: FlowParams) -> float:
    """Published second-moment expression (inconsistent with :func:`pair_density`)."""
    p = _params(p)
    s = p.scaled_length
    i_s, j_s = _incomplete(s)
    return (
        1.0
        - 4.0 / math.pi
        + 5.0 * s / SQRT_PI
        + s * s / math.pi
        + 4.0 / math.pi * _gauss(s, 0.5)
        - 2.0 * i_s / math.pi
        - 4.0 * s * j_s / math.pi
    )


def var_clusters_printed(p: FlowParams) -> float:
    """Published variance expression; negative for roughly ``0.8 < s < 25``."""
    p = _params(p)
    s = p.scaled_length
    i_s, j_s = _incomplete(s)
    return (
        -4.0 / math.pi
        + 3.0 * s / SQRT_PI
        + 4.0 / math.pi * _gauss(s, 0.5)
        - 2.0 * i_s / math.pi
        - 4.0 * s * j_s / math.pi
    )


def sigma_sq(t: float) -> float:
    """Limit variance per unit length, ``(3 - 2 sqrt 2) / sqrt(pi t)``."""
    if not (math.isfinite(t) and t > 0):
        raise DomainError(f"t must be finite and > 0, got {t!r}")
    return (3.0 - 2.0 * SQRT2) / math.sqrt(math.pi * t)


def closed_form_summary(p: FlowParams) -> ClosedFormSummary:
    p = _params(p)
    return ClosedFormSummary(
        mean=mean_clusters(p),
        variance=var_clusters(p),
        second_moment=second_moment_clusters(p),
        sigma_sq=sigma_sq(p.t),
    )


def pair_density(t: float, v1, v2):
    """Two-point density of cluster positions at time ``t``.

    Depends on ``|v2 - v1|`` only; vanishes on the diagonal and tends to
    ``1 / (pi t)`` at large separation.  Accepts arrays for ``v1``, ``v2``.
    """
    if not (math.isfinite(t) and t > 0):
        raise DomainError(f"t must be finite and > 0, got {t!r}")
    r = np.abs(_check_finite(v2) - _check_finite(v1)) / math.sqrt(t)
    far = r > GAUSS_CUTOFF
    rc = np.where(far, 0.0, r)
    g4 = np.exp(-0.25 * rc * rc)
    tail = SQRT_PI * special.erfc(0.5 * rc)
    val = 0.5 * rc * g4 * tail - np.expm1(-0.5 * rc * rc)
    val = np.where(far, 1.0, val) / (math.pi * t)
    return _out(val, r)


def mixing_bound(t: float, n: int) -> tuple[float, float]:
    """Upper bounds on the strong mixing coefficient at separation ``n``.

    Returns ``(integral_form, tail_form)`` with
    ``integral_form = 2 sqrt(2/(pi t)) int_n^inf exp(-r^2/(2t)) dr = 2 erfc(n / sqrt(2t))``
    and ``tail_form = (2/n) sqrt(2/(pi t)) exp(-n^2/(2t))``.  The tail form
    dominates the integral form whenever ``t <= 1``.
    """
    if not (math.isfinite(t) and t > 0):
        raise DomainError(f"t must be finite and > 0, got {t!r}")
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"n must be an integer >= 1, got {n!r}")
    n = int(n)
    integral = 2.0 * math.erfc(n / math.sqrt(2.0 * t))
    tail = 2.0 / n * math.sqrt(2.0 / (math.pi * t)) * math.exp(-n * n / (2.0 * t))
    return integral, tail


def moment_asymptote(k: int, p: FlowParams) -> float:
    """Leading behaviour ``(u / sqrt(pi t))^k`` of the k-th moment."""
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise DomainError(f"k must be an integer >= 1, got {k!r}")
    p = _params(p)
    return (p.scaled_length / SQRT_PI) ** int(k)
