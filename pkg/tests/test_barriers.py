import numpy as np
import pytest

from ftlab.barriers import (barrier_constants, barrier_exponent, build_barrier_sub,
                            build_barrier_super, check_discrete_subsolution,
                            check_discrete_supersolution)
from ftlab.degeneracy import DegeneracyParams, constant_theta, theta_field
from ftlab.errors import ConfigurationError
from ftlab.grid import DomainSpec, GridFunction, build_domain
from ftlab.operators import EllipticOperatorSpec
from ftlab.verification import random_theta

TRACE = EllipticOperatorSpec("negative_trace")


@pytest.fixture(scope="module")
def ball():
    return build_domain(DomainSpec("ball", 2, 1 / 16))


def test_constants_unit_ball():
    assert barrier_exponent(1, 1, 2) == 3.0
    R1, a, M = barrier_constants(1, 1, 2, R=1.0, diam=2.0, K=0.5, g_sup=0.5)
    assert (R1, a, M) == (3.0, 3.0, 81.0)
    assert 1 * (a + 2) - 2 * 1 >= 1
    assert M * a / R1 ** (1 + a) >= 1 and M * a / R1 ** (2 + a) >= 1


@pytest.mark.parametrize("lam, Lam", [(1, 1), (0.5, 2), (1, 4)])
def test_exponent_inequality(lam, Lam):
    a = barrier_exponent(lam, Lam, 2)
    assert a > 2 and lam * (a + 2) - 2 * Lam >= 1 - 1e-12


def test_zero_data_barrier(ball):
    w, spec = build_barrier_super(ball.zeros(), ball.zeros(), ball, TRACE)
    assert w.values.min() >= 0
    assert spec.tightness <= spec.eta_levels[-1] + 1e-12
    assert 0.0 <= w.values[ball.boundary].min() <= spec.eta_levels[-1]
    lines = spec.manifest_lines()
    assert any(line.startswith("barrier.M_b = ") for line in lines)


@pytest.mark.parametrize("eps", [0.5, 0.1, 0.02])
@pytest.mark.parametrize("kind, lam, Lam", [("negative_trace", 1, 1), ("pucci_plus", 1, 2),
                                            ("pucci_minus", 1, 2), ("convex_combination", 1, 2)])
def test_barriers_are_discrete_barriers(ball, eps, kind, lam, Lam, rng):
    op = EllipticOperatorSpec(kind, lam, Lam)
    x = ball.coords
    g = GridFunction(ball, np.sin(3 * x[:, 0]) + x[:, 1] ** 2)
    f = GridFunction(ball, np.cos(2 * x[:, 1]) * 0.8)
    hi, _ = build_barrier_super(g, f, ball, op)
    lo, _ = build_barrier_sub(g, f, ball, op)
    B = ball.boundary
    assert (hi.values[B] >= g.values[B] - 1e-12).all()
    assert (lo.values[B] <= g.values[B] + 1e-12).all()
    theta = random_theta(ball, DegeneracyParams(1.0, 3.0), rng)
    assert check_discrete_supersolution(hi, eps, theta, f, op).passed
    assert check_discrete_subsolution(lo, eps, theta, f, op).passed


def test_paraboloid_alone_is_super(ball):
    f = ball.sample(lambda x: np.full(len(x), 1.0))
    w, spec = build_barrier_super(ball.zeros(), f, ball, TRACE, eta_levels=1)
    c = spec.K1 / (2 * spec.lam * spec.dim)
    w1 = spec.K2 - c * ((ball.coords - np.array(spec.x0)) ** 2).sum(axis=1)
    for eps in (0.9, 0.3, 0.01):
        th = constant_theta(ball, 2.0)
        assert check_discrete_supersolution(GridFunction(ball, w1), eps, th, f, TRACE).passed


def test_zero_checks(ball):
    th = constant_theta(ball, 1.0)
    rep = check_discrete_supersolution(ball.zeros(), 0.3, th, ball.zeros(), TRACE)
    assert rep.passed and rep.worst_margin == 0.0
    one = ball.sample(lambda x: np.ones(len(x)))
    bad = check_discrete_supersolution(ball.zeros(), 0.3, th, one, TRACE)
    assert not bad.passed and len(bad.violations) == len(ball.interior)


def test_trace_barrier_needs_unit_band(ball):
    with pytest.raises(ConfigurationError, match="lambda <= 1 <= Lambda"):
        build_barrier_super(ball.zeros(), ball.zeros(), ball, EllipticOperatorSpec("negative_trace", 2, 2))


def test_solution_enclosed(ball, rng):
    from ftlab.solver import SolveConfig, solve_regularized
    x = ball.coords
    g = GridFunction(ball, x[:, 0] * x[:, 1] - 0.3)
    f = GridFunction(ball, -0.7 + 0 * x[:, 0])
    hi, _ = build_barrier_super(g, f, ball, TRACE)
    lo, _ = build_barrier_sub(g, f, ball, TRACE)
    p = DegeneracyParams(1.0, 3.0, 0.1)
    th = theta_field(g, p)
    u, _ = solve_regularized(None, 0.1, f, g, TRACE, SolveConfig(), theta=th)
    assert (lo.values <= u.values + 1e-9).all() and (u.values <= hi.values + 1e-9).all()
