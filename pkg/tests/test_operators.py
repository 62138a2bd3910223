import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ftlab.errors import ConfigurationError, EllipticityError
from ftlab.grid import DomainSpec, build_domain
from ftlab.operators import (EllipticOperatorSpec, OperatorKind, ScaledOperator,
                             check_uniform_ellipticity, pucci_minus, pucci_plus)

KINDS = list(OperatorKind)


@pytest.mark.parametrize("M, lam, Lam, plus, minus", [
    (np.diag([1.0, -1.0]), 1, 2, 1.0, -1.0),
    (np.zeros((2, 2)), 1, 2, 0.0, 0.0),
    (np.eye(2), 1, 2, -2.0, -4.0),
])
def test_pucci_examples(M, lam, Lam, plus, minus):
    assert pucci_plus(M, lam, Lam) == pytest.approx(plus)
    assert pucci_minus(M, lam, Lam) == pytest.approx(minus)


sym2 = st.lists(st.floats(-10, 10), min_size=3, max_size=3).map(
    lambda v: np.array([[v[0], v[1]], [v[1], v[2]]]))


@settings(max_examples=60)
@given(sym2, st.floats(0.1, 2), st.floats(1, 3))
def test_pucci_ordering(M, lam, ratio):
    assert pucci_minus(M, lam, lam * ratio) <= pucci_plus(M, lam, lam * ratio) + 1e-9


def test_negative_trace_exact():
    assert EllipticOperatorSpec("negative_trace").apply_exact(np.diag([2.0, 3.0])) == -5.0


@settings(max_examples=30)
@given(sym2)
def test_convex_weight_one_is_negative_trace(M):
    cc = EllipticOperatorSpec("convex_combination", 1, 2, weight=1.0)
    assert cc.apply_exact(M) == pytest.approx(-np.trace(M), abs=1e-9)


def test_discrete_matches_exact_on_quadratic():
    dom = build_domain(DomainSpec("box", 2, 1 / 8))
    u = dom.sample(lambda x: 0.5 * (x[:, 0] ** 2 - x[:, 1] ** 2))
    op = EllipticOperatorSpec("pucci_plus", 1, 2)
    node = dom.node_at((0.25, 0.25))
    assert op.apply_discrete(u, node) == pytest.approx(1.0, abs=1e-10)
    assert pucci_plus(np.diag([1.0, -1.0]), 1, 2) == pytest.approx(1.0)


@pytest.mark.parametrize("dim", [1, 2])
def test_discrete_half_norm_squared(dim):
    shape = "interval" if dim == 1 else "box"
    dom = build_domain(DomainSpec(shape, dim, 1 / 8))
    u = dom.sample(lambda x: 0.5 * (x ** 2).sum(axis=1))
    vals = EllipticOperatorSpec("negative_trace").discrete_all(dom, u.values)
    np.testing.assert_allclose(vals, -dim, atol=1e-10)


@pytest.mark.parametrize("kind", KINDS)
def test_discrete_affine_is_zero(kind):
    dom = build_domain(DomainSpec("box", 2, 1 / 8))
    u = dom.sample(lambda x: 0.3 * x[:, 0] - 2 * x[:, 1] + 1)
    op = EllipticOperatorSpec(kind, 1, 2) if kind is not OperatorKind.NEGATIVE_TRACE \
        else EllipticOperatorSpec(kind, 1, 2)
    np.testing.assert_allclose(op.discrete_all(dom, u.values), 0.0, atol=1e-10)


@pytest.mark.parametrize("dim", [1, 2])
def test_negative_trace_band(dim):
    rep = check_uniform_ellipticity(EllipticOperatorSpec("negative_trace", 1, dim), 500,
                                    seed=3, dim=dim)
    assert rep.passed


@pytest.mark.parametrize("kind", ["pucci_plus", "pucci_minus", "convex_combination"])
def test_extremal_kinds_pass(kind):
    rep = check_uniform_ellipticity(EllipticOperatorSpec(kind, 1, 2), 1000, seed=0, dim=2)
    assert rep.passed
    assert rep.worst_lower_margin >= -1e-9


def test_spectral_band():
    assert EllipticOperatorSpec("pucci_minus", 1, 2).spectral_band(2) == (1, 4)
    assert EllipticOperatorSpec("negative_trace", 1, 2).spectral_band(2) == (1, 2)


def test_bad_declaration_rejected_in_1d():
    # -trace has drop tr(N) = |N| in 1D, below the declared lower constant 2
    with pytest.raises(EllipticityError) as info:
        check_uniform_ellipticity(EllipticOperatorSpec("negative_trace", 2, 2), 50, dim=1)
    w = info.value.witness
    assert w["drop"] == pytest.approx(w["norm"])


def test_inverted_constants_rejected():
    with pytest.raises(ConfigurationError):
        EllipticOperatorSpec("negative_trace", 2, 1)


def test_scaled_operator_keeps_band():
    base = EllipticOperatorSpec("pucci_plus", 1, 2)
    s = ScaledOperator(base, 0.125)
    M = np.diag([1.0, -3.0])
    assert s.apply_exact(M) == pytest.approx(base.apply_exact(M / 0.125) * 0.125)
    assert check_uniform_ellipticity(s, 300, dim=2).passed
