import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ftlab.errors import ConfigurationError
from ftlab.grid import DomainSpec, GridFunction, build_domain
from ftlab.operators import EllipticOperatorSpec, check_uniform_ellipticity
from ftlab.scaling import scale_problem, scaled_bound, scaling_K


@pytest.fixture(scope="module")
def box():
    return build_domain(DomainSpec("box", 2, 1 / 16))


def test_identity(box, rng):
    u = GridFunction(box, rng.uniform(-1, 1, box.n_nodes))
    v, c = scale_problem(u, 0.7, 1.0, 3.0, K_override=1.0)
    np.testing.assert_array_equal(v.values, u.values)
    assert c.C0_bar == 0.7


def test_unit_example(box):
    u = box.sample(lambda x: x[:, 0] * x[:, 1])  # sup norm exactly 1 at the corners
    v, c = scale_problem(u, 1.0, 0.5, 3.0, op=EllipticOperatorSpec("pucci_minus", 1, 2))
    assert c.K == 2.0
    assert c.C0_bar == 0.125
    assert abs(c.C0_bar - max(2.0 ** -5 / 2 ** 4, 2.0 ** -2 / 2)) <= 1e-12
    assert check_uniform_ellipticity(c.operator, 1000, dim=2).passed
    assert np.abs(v.values).max() <= 1.0
    # v(x) = u(x/2) / 2 on the finer grid
    x = v.domain.coords
    np.testing.assert_allclose(v.values, x[:, 0] * x[:, 1] / 8, atol=1e-15)


@settings(max_examples=40)
@given(st.floats(0.0, 5.0), st.floats(0.01, 1.0), st.floats(0.1, 5.0), st.integers(1, 5))
def test_small_r_bound(u_sup, eps, theta2, k):
    # r = eps <= K gives |v| <= 1 and C0_bar <= eps when C0 <= eps^(1+theta2)
    r = 2.0 ** -k
    C0 = r ** (1 + theta2)
    K = scaling_K(u_sup, C0, theta2)
    assert u_sup / K <= 1
    assert scaled_bound(C0, r, K, theta2) <= r * (1 + 1e-12)


@pytest.mark.parametrize("r", [0.3, 0.0, 1.5])
def test_bad_radius(box, r):
    with pytest.raises(ConfigurationError):
        scale_problem(box.zeros(), 1.0, r, 3.0)
