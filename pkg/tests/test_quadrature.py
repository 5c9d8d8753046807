import math

import numpy as np
import pytest

from coalesce_lab.errors import ContractViolation
from coalesce_lab.quadrature import QuadratureSpec, gauss_legendre_01, simplex_rule


def test_gauss_legendre_exact_for_polynomials():
    x, w = gauss_legendre_01(5)
    for k in range(10):
        assert np.dot(w, x ** k) == pytest.approx(1 / (k + 1), rel=1e-14)
    assert not x.flags.writeable


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_simplex_volume_and_monomials(n):
    u = 1.7
    pts, wts = simplex_rule(QuadratureSpec(n, 8), u)
    assert pts.shape == (8 ** n, n)
    assert wts.sum() == pytest.approx(u ** n / math.factorial(n), rel=1e-13)
    # int over the ordered simplex of v_n equals n/(n+1) * u * volume
    assert np.dot(wts, pts[:, -1]) == pytest.approx(n / (n + 1) * u ** (n + 1) / math.factorial(n), rel=1e-12)


def test_points_strictly_increasing_inside_interval():
    pts, _ = simplex_rule(QuadratureSpec(4, 12), 2.0)
    assert np.all(np.diff(pts, axis=1) > 0)
    assert pts.min() > 0 and pts.max() < 2.0


def test_spec_validation_and_doubling():
    assert QuadratureSpec.default(2).doubled().nodes_per_axis == 2 * QuadratureSpec.default(2).nodes_per_axis
    for bad in ((0, 8), (5, 8), (2, 1)):
        with pytest.raises(ContractViolation):
            QuadratureSpec(*bad)
    with pytest.raises(ContractViolation):
        QuadratureSpec(2, 8, "monte-carlo")
