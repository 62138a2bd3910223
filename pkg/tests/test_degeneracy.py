import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ftlab.degeneracy import (UNDETERMINED, DegeneracyParams, clamp_indicator, limit_exponent,
                              mollify, theta_field)
from ftlab.errors import ConfigurationError, ResolutionError
from ftlab.grid import DomainSpec, GridFunction, build_domain


@pytest.mark.parametrize("value, expected", [(0.1, 1.0), (-0.1, 0.0), (0.0, 0.5), (1.0, 1.0)])
def test_clamp(interval64, value, expected):
    g = clamp_indicator(interval64.sample(lambda x: np.full(len(x), value)), 0.1)
    np.testing.assert_allclose(g.values, expected)


def test_mollify_constants(box8):
    one = box8.sample(lambda x: np.ones(len(x)))
    np.testing.assert_allclose(mollify(one, 0.25, outside=1.0).values, 1.0, atol=1e-14)
    np.testing.assert_array_equal(mollify(box8.zeros(), 0.25).values, 0.0)


def test_mollify_step_is_half_at_jump(interval64):
    step = interval64.sample(lambda x: (x[:, 0] >= 0).astype(float))
    # the zero lattice node itself weighs in, so the symmetric value is 1/2 + w0/2
    h = mollify(step, 0.25, outside=0.0)
    h_mid = mollify(interval64.sample(lambda x: np.where(x[:, 0] > 0, 1.0,
                                                         np.where(x[:, 0] < 0, 0.0, 0.5))), 0.25)
    assert h_mid.values[interval64.node_at(0.0)] == pytest.approx(0.5, abs=1e-14)
    assert h.values[interval64.node_at(0.0)] > 0.5


def test_mollify_below_spacing(interval64):
    with pytest.raises(ResolutionError):
        mollify(interval64.zeros(), interval64.h / 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.5))
def test_theta_field_bounds(seed, eps):
    dom = build_domain(DomainSpec("interval", 1, 1 / 32))
    v = GridFunction(dom, np.random.default_rng(seed).normal(size=dom.n_nodes))
    p = DegeneracyParams(1.0, 3.0, eps)
    th = theta_field(v, p).values
    assert (th >= 1.0).all() and (th <= 3.0).all()


def test_theta_field_phases(interval64):
    p = DegeneracyParams(1.0, 3.0, 0.1)
    v = interval64.sample(lambda x: np.where(x[:, 0] > 0, 1.0, -1.0))
    th = theta_field(v, p)
    x = interval64.coords[:, 0]
    # away from the jump and from the zero extension beyond the boundary
    np.testing.assert_allclose(th.values[(x > 0.3) & (x < 0.75)], 1.0)
    np.testing.assert_allclose(th.values[x < -0.3], 3.0)
    odd = theta_field(interval64.sample(lambda x: x[:, 0]), p)
    assert odd.values[interval64.node_at(0.0)] == pytest.approx(2.0)


@pytest.mark.parametrize("value, expected", [(1.0, 1.0), (-1.0, 3.0), (0.0, UNDETERMINED)])
def test_limit_exponent(interval64, value, expected):
    u = interval64.sample(lambda x: np.full(len(x), value))
    th = limit_exponent(u, DegeneracyParams(1.0, 3.0))
    np.testing.assert_array_equal(th.values, expected)
    assert th.undetermined.all() == (value == 0.0)


@pytest.mark.parametrize("t1, t2", [(3.0, 1.0), (0.0, 1.0), (1.0, 1.0)])
def test_params_validation(t1, t2):
    with pytest.raises(ConfigurationError, match="0 < theta1 < theta2"):
        DegeneracyParams(t1, t2)


def test_allow_equal():
    assert DegeneracyParams(1.0, 1.0, allow_equal=True).midpoint == 1.0
