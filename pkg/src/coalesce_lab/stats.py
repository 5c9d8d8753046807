"""Estimators and distribution distances for integer-valued Monte Carlo output."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DomainError, SampleSizeError

TV_PERMUTATIONS = 200
TV_QUANTILE = 0.99


@dataclass(frozen=True)
class Sample:
    values: np.ndarray

    def __init__(self, values):
        arr = np.array(values, dtype=float).ravel()
        if arr.size < 1:
            raise SampleSizeError("a sample needs at least one value")
        if not np.all(np.isfinite(arr)):
            raise DomainError("sample values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size


def _values(s) -> np.ndarray:
    return s.values if isinstance(s, Sample) else Sample(s).values


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float
    se_mean: float
    se_variance: float

    def __iter__(self):
        return iter((self.mean, self.variance, self.se_mean, self.se_variance))


def moments(s) -> Moments:
    """Unbiased mean and variance with their standard errors.

    ``se_variance`` uses ``Var(s^2) = (m4 - (M-3)/(M-1) * var^2) / M`` with
    the fourth central moment ``m4``.
    """
    x = _values(s)
    n = x.size
    if n < 2:
        raise SampleSizeError(f"moments need at least 2 values, got {n}")
    mean = float(x.mean())
    d = x - mean
    var = float(d @ d) / (n - 1)
    m2 = float(d @ d) / n
    m4 = float(np.mean(d ** 4))
    v4 = (m4 - (n - 3) / (n - 1) * m2 * m2) / n
    return Moments(mean, var, math.sqrt(var / n), math.sqrt(max(v4, 0.0)))


@dataclass(frozen=True)
class KSResult:
    statistic: float
    sample_size: int
    mu: float
    sigma_sq: float

    @property
    def reference(self) -> str:
        return f"normal(mean={self.mu:g}, variance={self.sigma_sq:g})"


def _ks_sorted(x: np.ndarray, mu: float, sd: float) -> float:
    n = x.size
    vals, counts = np.unique(x, return_counts=True)
    above = np.cumsum(counts) / n
    below = above - counts / n
    phi = ndtr((vals - mu) / sd)
    return float(max(np.max(np.abs(above - phi)), np.max(np.abs(below - phi))))


def ks_to_normal(s, mu: float, sigma_sq: float) -> KSResult:
    """Sup distance between the empirical CDF and ``N(mu, sigma_sq)``.

    Ties are handled as atoms: at every distinct value both one-sided limits
    of the empirical CDF are compared with the normal CDF.
    """
    if not (math.isfinite(sigma_sq) and sigma_sq > 0):
        raise DomainError(f"sigma_sq must be finite and > 0, got {sigma_sq!r}")
    x = _values(s)
    return KSResult(_ks_sorted(x, mu, math.sqrt(sigma_sq)), int(x.size), float(mu), float(sigma_sq))


def ks_bootstrap_se(s, mu: float, sigma_sq: float, *, resamples: int = 200, seed: int = 0) -> float:
    """Bootstrap standard error of :func:`ks_to_normal`'s statistic."""
    x = _values(s)
    sd = math.sqrt(sigma_sq)
    rng = np.random.default_rng(seed)
    stats = np.array([_ks_sorted(rng.choice(x, x.size), mu, sd) for _ in range(resamples)])
    return float(stats.std(ddof=1))


def _as_int(s) -> np.ndarray:
    x = _values(s)
    xi = np.rint(x).astype(np.int64)
    if not np.array_equal(xi, x):
        raise DomainError("two_sample_tv needs integer-valued samples")
    return xi


def _tv_codes(codes: np.ndarray, na: int, k: int) -> float:
    pa = np.bincount(codes[:na], minlength=k) / na
    pb = np.bincount(codes[na:], minlength=k) / (codes.size - na)
    return 0.5 * float(np.abs(pa - pb).sum())


def two_sample_tv(a, b, *, permutations: int = TV_PERMUTATIONS, seed: int = 0) -> tuple[float, float]:
    """Total variation between two empirical pmfs and its permutation threshold.

    The threshold is the 99th percentile of the statistic over ``permutations``
    random re-partitions of the pooled sample.
    """
    xa, xb = _as_int(a), _as_int(b)
    pooled = np.concatenate([xa, xb])
    _, codes = np.unique(pooled, return_inverse=True)
    k = int(codes.max()) + 1
    tv = _tv_codes(codes, xa.size, k)
    rng = np.random.default_rng(seed)
    null = np.array([_tv_codes(rng.permutation(codes), xa.size, k) for _ in range(permutations)])
    return tv, float(np.quantile(null, TV_QUANTILE))


def autocovariance(blocks: np.ndarray, max_lag: int) -> np.ndarray:
    """Lag-0..max_lag autocovariance of centered block rows, pooled over rows.

    ``blocks`` has one replica per row and one block per column; every column
    is centered by its own mean before pooling.
    """
    b = np.asarray(blocks, dtype=float)
    if b.ndim != 2 or b.shape[1] <= max_lag:
        raise DomainError("need a 2-d array with more columns than max_lag")
    c = b - b.mean(axis=0)
    return np.array([float(np.mean(c[:, : c.shape[1] - k] * c[:, k:])) for k in range(max_lag + 1)])
