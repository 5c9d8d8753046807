import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from coalesce_lab import analytic as an
from coalesce_lab.analytic import FlowParams
from coalesce_lab.errors import DomainError

SQPI = math.sqrt(math.pi)


def second_moment_oracle(t, u):
    """E nu^2 from 1 + 3 E N + E N(N-1), the last term by quadrature of the pair density."""
    s = mpmath.sqrt(t)

    def rho2(r):
        r = r / s
        return (0.5 * r * mpmath.exp(-r * r / 4) * mpmath.sqrt(mpmath.pi) * mpmath.erfc(r / 2)
                + 1 - mpmath.exp(-r * r / 2)) / (mpmath.pi * t)

    mpmath.mp.dps = 30
    pair = 2 * mpmath.quad(lambda r: (u - r) * rho2(r), [0, min(u, 1), u])
    mean_n = u / mpmath.sqrt(mpmath.pi * t)
    return float(1 + 3 * mean_n + pair)


# F and derivatives

def test_F_examples():
    assert an.F(0.0) == 1.0
    assert 0 <= an.F(40.0) < 1e-170
    assert an.F(2.0) == pytest.approx(float(mpmath.erfc(1)), rel=1e-14)
    assert an.F1(0.0) == pytest.approx(-1 / SQPI, rel=1e-15)
    assert an.F2(0.0) == 0.0


def test_F_matches_defining_integral():
    for z in (-3.0, -0.5, 0.7, 2.0, 6.0):
        val, _ = integrate.quad(lambda r: math.exp(-r * r / 4), z, np.inf, epsabs=0, epsrel=1e-13)
        assert an.F(z) == pytest.approx(val / SQPI, rel=1e-12)


def test_derivatives_by_finite_differences():
    h = 1e-5
    assert abs((an.F(1 + h) - an.F(1 - h)) / (2 * h) - an.F1(1.0)) <= 1e-8
    for z in (-2.0, 0.3, 1.0, 3.5):
        fd = (an.F1(z + h) - an.F1(z - h)) / (2 * h)
        assert abs(fd - an.F2(z)) <= 1e-8


def test_F_vectorized_and_monotone():
    z = np.linspace(-10, 40, 501)
    f = an.F(z)
    assert isinstance(f, np.ndarray) and f.shape == z.shape
    assert np.all(np.diff(f) <= 0)
    assert isinstance(an.F(1.0), float)


@pytest.mark.parametrize("fn", [an.F, an.F1, an.F2])
@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_F_rejects_non_finite(fn, bad):
    with pytest.raises(DomainError):
        fn(bad)
    with pytest.raises(DomainError):
        fn(np.array([0.0, bad]))


@given(st.floats(-30, 30))
def test_F_reflection(z):
    assert an.F(-z) == pytest.approx(2 - an.F(z), abs=1e-15)


# moments

def test_mean_examples():
    assert an.mean_clusters(FlowParams(3.0, 0.0)) == 1.0
    assert an.mean_clusters(FlowParams(1.0, SQPI)) == pytest.approx(2.0, rel=1e-15)
    assert an.mean_clusters(FlowParams(4.0, 2 * SQPI)) == pytest.approx(2.0, rel=1e-15)


def test_zero_length_interval():
    p = FlowParams(1.0, 0.0)
    assert an.second_moment_clusters(p) == pytest.approx(1.0, abs=1e-15)
    assert an.var_clusters(p) == 0.0


@pytest.mark.parametrize("t,u", [(1, 0.5), (1, 1), (1, 2), (0.3, 1.7), (2.5, 7.0), (1, 20)])
def test_second_moment_against_pair_density_quadrature(t, u):
    assert an.second_moment_clusters(FlowParams(t, u)) == pytest.approx(second_moment_oracle(t, u), rel=1e-10)


def test_printed_second_moment_disagrees_with_pair_density():
    p = FlowParams(1.0, 1.0)
    assert abs(an.second_moment_clusters_printed(p) - second_moment_oracle(1, 1)) > 0.1
    # and the printed variance is negative on an intermediate range
    assert an.var_clusters_printed(FlowParams(1.0, 5.0)) < 0


def test_moment_identity():
    p = FlowParams(1.0, 10.0)
    lhs = an.second_moment_clusters(p)
    rhs = an.mean_clusters(p) ** 2 + an.var_clusters(p)
    assert abs(lhs - rhs) <= 1e-10 * lhs


def test_variance_slope_at_large_u():
    # Var = sigma^2 u + (4/pi - 1) + o(1), so the ratio settles like 1/u
    for u, tol in ((100.0, 6e-3), (5000.0, 1e-4)):
        ratio = an.var_clusters(FlowParams(1.0, u)) / (u / SQPI)
        assert abs(ratio - (3 - 2 * math.sqrt(2))) <= tol
    u = 100.0
    intercept = an.var_clusters(FlowParams(1.0, u)) - an.sigma_sq(1.0) * u
    assert intercept == pytest.approx(4 / math.pi - 1, abs=1e-12)


def test_variance_small_u_coefficient():
    u = 1e-4
    ratio = an.var_clusters(FlowParams(1.0, u)) / (u / SQPI)
    assert ratio == pytest.approx(1.0, abs=1e-3)


def test_variance_continuous_across_gauss_cutoff():
    lo = an.var_clusters(FlowParams(1.0, an.GAUSS_CUTOFF * (1 - 1e-12)))
    hi = an.var_clusters(FlowParams(1.0, an.GAUSS_CUTOFF * (1 + 1e-12)))
    assert hi == pytest.approx(lo, rel=1e-10)


def test_variance_positive_and_scale_invariant():
    for s in np.geomspace(1e-3, 1e3, 40):
        assert an.var_clusters(FlowParams(1.0, s)) > 0
    assert an.var_clusters(FlowParams(0.25, 5.0)) == pytest.approx(an.var_clusters(FlowParams(1.0, 10.0)), rel=1e-14)


def test_sigma_sq():
    exact = (3 - 2 * mpmath.sqrt(2)) / mpmath.sqrt(mpmath.pi)
    assert an.sigma_sq(1.0) == pytest.approx(float(exact), rel=1e-15)
    assert an.sigma_sq(1.0) == pytest.approx(0.0967996, abs=5e-8)
    assert an.sigma_sq(4.0) == pytest.approx(an.sigma_sq(1.0) / 2, rel=1e-15)
    assert abs(an.var_clusters(FlowParams(1.0, 1e4)) / 1e4 - an.sigma_sq(1.0)) <= 1e-4


@pytest.mark.parametrize("fn", [an.mean_clusters, an.second_moment_clusters, an.var_clusters])
def test_moment_domain_errors(fn):
    with pytest.raises(DomainError):
        fn(FlowParams(0.0, 1.0))
    with pytest.raises(DomainError):
        fn((-1.0, 1.0))
    with pytest.raises(DomainError):
        fn((1.0, -1.0))
    with pytest.raises(DomainError):
        an.sigma_sq(0.0)


def test_closed_form_summary():
    p = FlowParams(2.0, 3.0)
    s = an.closed_form_summary(p)
    assert s.mean == an.mean_clusters(p) and s.variance == an.var_clusters(p)
    assert s.sigma_sq == an.sigma_sq(2.0)


# pair density

def test_pair_density_examples():
    assert an.pair_density(1.0, 0.3, 0.3) == 0.0
    assert an.pair_density(1.0, 0.0, 50.0) == pytest.approx(1 / math.pi, abs=1e-12)
    assert an.pair_density(1.0, 0.0, 1e6) == pytest.approx(1 / math.pi, abs=1e-15)


def test_pair_density_against_mpmath():
    mpmath.mp.dps = 30
    for t, r in ((1.0, 1.0), (0.5, 0.01), (4.0, 3.3), (1.0, 12.0)):
        x = mpmath.mpf(r) / mpmath.sqrt(t)
        ref = (x / 2 * mpmath.exp(-x * x / 4) * mpmath.sqrt(mpmath.pi) * mpmath.erfc(x / 2)
               + 1 - mpmath.exp(-x * x / 2)) / (mpmath.pi * t)
        assert an.pair_density(t, 0.0, r) == pytest.approx(float(ref), rel=1e-12)


def test_pair_density_vectorized_symmetric():
    v = np.linspace(-2, 2, 9)
    a = an.pair_density(1.0, v[:, None], v[None, :])
    assert a.shape == (9, 9)
    np.testing.assert_array_equal(a, a.T)


# mixing bound and asymptotes

def test_mixing_bound_integral_form():
    val, _ = integrate.quad(lambda r: math.exp(-r * r / 2), 1, np.inf, epsabs=0, epsrel=1e-13)
    integral, _ = an.mixing_bound(1.0, 1)
    assert integral == pytest.approx(2 * math.sqrt(2 / math.pi) * val, rel=1e-12)


def test_mixing_bound_tail_dominates_for_t_le_1():
    for t in (0.05, 0.5, 1.0):
        for n in range(1, 30):
            integral, tail = an.mixing_bound(t, n)
            assert integral <= tail
    integral, tail = an.mixing_bound(1.0, 3)
    assert integral <= tail


def test_mixing_bound_tail_form_fails_beyond_t_1():
    # the tail form carries an extra factor t compared with the sharp Mills bound
    integral, tail = an.mixing_bound(4.0, 2)
    assert integral > tail


def test_mixing_bound_decreasing():
    forms = np.array([an.mixing_bound(1.0, n) for n in range(1, 40)])
    assert np.all(np.diff(forms, axis=0) <= 0)
    assert forms[-1].max() < 1e-300 or forms[-1].max() < 1e-100


def test_mixing_bound_errors():
    for t, n in ((0.0, 1), (1.0, 0), (1.0, 1.5), (-1.0, 2)):
        with pytest.raises(DomainError):
            an.mixing_bound(t, n)


def test_moment_asymptote():
    p = FlowParams(1.0, 100.0)
    assert an.moment_asymptote(1, p) == pytest.approx(100 / SQPI)
    ratio = an.second_moment_clusters(p) / an.moment_asymptote(2, p)
    assert abs(ratio - 1) <= 0.05
    with pytest.raises(DomainError):
        an.moment_asymptote(0, p)


@settings(max_examples=50)
@given(st.floats(0.01, 100), st.floats(0.0, 200), st.floats(0.1, 10))
def test_formulas_depend_on_scaled_length_only(t, u, eps):
    a, b = FlowParams(t, u), FlowParams(eps * eps * t, eps * u)
    assert an.mean_clusters(a) == pytest.approx(an.mean_clusters(b), rel=1e-12)
    assert an.var_clusters(a) == pytest.approx(an.var_clusters(b), rel=1e-9, abs=1e-12)
