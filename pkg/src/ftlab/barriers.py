"""Explicit global super- and subsolutions of the regularized equation.

The supersolution is the pointwise minimum of a concave paraboloid ``w1``
centred at an exterior anchor ``x0`` and, for every boundary node ``y`` and
level ``eta``, an inverse-power profile ``g(y) + eta + C_eta * w_y`` that
vanishes on an exterior ball touching near ``y``.  Each piece satisfies

    (eps + |Dw|)^theta (eps*w + F(D^2 w)) >= K = |f|_inf

for every ``eps`` in (0, 1) and every exponent field, because the gradient
factor is at least one and ``F(D^2 w) >= P^-(D^2 w)`` is large.  The
subsolution is the mirror image built from ``(-g, -f)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .grid import Domain, GridFunction, Shape, fmt
from .operators import OperatorKind
from .solver import DEFAULT_GRADIENT, regularized_residual

DEFAULT_ETA_LEVELS = 6
_TRACE_KINDS = (OperatorKind.NEGATIVE_TRACE, OperatorKind.CONVEX_COMBINATION)


@dataclass
class BarrierSpec:
    x0: tuple
    K: float
    K1: float
    K2: float
    R: float
    R1: float
    alpha_b: float
    M_b: float
    g_sup: float
    lam: float
    Lam: float
    dim: int
    eta_levels: tuple = ()
    C_eta: tuple = ()
    tightness: float = math.nan  # max of w(y) - g(y) over anchor nodes
    anchors: int = 0  # boundary nodes touched by an exterior ball
    skipped: int = 0  # (y, eta) pairs dropped because C_eta could not cover them

    def check(self):
        """Raise if one of the defining inequalities fails."""
        lam, Lam, d = self.lam, self.Lam, self.dim
        a, M, R1 = self.alpha_b, self.M_b, self.R1
        if lam * (a + 2.0) - d * Lam < 1.0 - 1e-12:
            raise ConfigurationError(
                f"lambda*(alpha_b+2) - d*Lambda = {lam * (a + 2) - d * Lam:.6g} < 1", "barrier.alpha_b")
        if not a > 2:
            raise ConfigurationError("alpha_b must exceed 2", "barrier.alpha_b")
        if M * a / R1 ** (1 + a) < 1.0 - 1e-12:
            raise ConfigurationError("M_b*alpha_b/R1^(1+alpha_b) < 1", "barrier.M_b")
        if M * a / R1 ** (2 + a) < (self.K + self.g_sup) * (1 - 1e-12):
            raise ConfigurationError("M_b*alpha_b/R1^(2+alpha_b) < K + |g|_inf", "barrier.M_b")
        if self.K1 < max(self.K, lam * d) * (1 - 1e-12):
            raise ConfigurationError("K1 < max(K, lambda*d)", "barrier.K1")
        if any(c < 1 for c in self.C_eta):
            raise ConfigurationError("C_eta must be >= 1", "barrier.C_eta")
        return self

    def manifest_lines(self, prefix="barrier"):
        items = {
            "x0": " ".join(fmt(c) for c in self.x0),
            "K": fmt(self.K), "K1": fmt(self.K1), "K2": fmt(self.K2),
            "R": fmt(self.R), "R1": fmt(self.R1),
            "alpha_b": fmt(self.alpha_b), "M_b": fmt(self.M_b),
            "g_sup": fmt(self.g_sup),
            "eta_levels": " ".join(fmt(e) for e in self.eta_levels),
            "C_eta": " ".join(fmt(c) for c in self.C_eta),
            "tightness": fmt(self.tightness), "anchors": str(self.anchors),
            "skipped": str(self.skipped),
        }
        return [f"{prefix}.{k} = {v}" for k, v in items.items()]


def barrier_exponent(lam, Lam, dim):
    """Smallest ``alpha > 2`` (at least 3) with ``lam*(alpha+2) - d*Lam >= 1``."""
    return max(3.0, (1.0 + dim * Lam) / lam - 2.0)


def barrier_constants(lam, Lam, dim, R, diam, K, g_sup):
    """``(R1, alpha_b, M_b)`` for exterior radius ``R`` and domain diameter ``diam``."""
    if not (R > 0 and diam > 0 and K >= 0 and g_sup >= 0):
        raise ConfigurationError("barrier constants need R, diam > 0 and K, |g| >= 0")
    R1 = R + diam
    a = barrier_exponent(lam, Lam, dim)
    M = max(R1 ** (1 + a) / a, (K + g_sup) * R1 ** (2 + a) / a)
    return R1, a, M


def _outward_normals(domain: Domain, nodes):
    x = domain.coords[nodes]
    spec = domain.spec
    if spec.shape is Shape.BALL:
        n = x.copy()
    else:
        tol = 1e-9 * spec.extent
        n = np.where(np.abs(x) >= spec.extent - tol, np.sign(x), 0.0)
        empty = ~n.any(axis=1)
        n[empty] = x[empty]
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    if (norm == 0).any():
        raise ConfigurationError("boundary node at the centre has no outward normal", "domain.R")
    return n / norm


def _to_values(domain, data, name):
    if isinstance(data, GridFunction):
        return data.values
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 0:
        return np.full(domain.n_nodes, float(arr))
    if arr.shape != (domain.n_nodes,):
        raise ConfigurationError(f"{name} must be given on every node")
    return arr


def build_barrier_super(g, f, domain: Domain, op, eta_levels=DEFAULT_ETA_LEVELS):
    """Global supersolution ``w`` with ``w >= g`` on boundary nodes.

    ``g`` is read on boundary nodes only, ``f`` only through ``|f|_inf``.
    ``eta_levels`` is the number ``k`` of levels ``1/2, ..., 2^-k``.  Returns
    ``(w, BarrierSpec)``.
    """
    if int(eta_levels) < 1:
        raise ConfigurationError("need at least one eta level", "barrier.eta_levels")
    lam, Lam, d = op.lam, op.Lam, domain.dim
    if getattr(op, "kind", None) in _TRACE_KINDS:
        # the -trace part lies above P^- only in this range
        if not lam <= 1.0 <= Lam:
            raise ConfigurationError(
                f"-trace lies above P^-(lambda, Lambda) only if lambda <= 1 <= Lambda, "
                f"got ({lam}, {Lam})", "operator.lambda")
    gv = _to_values(domain, g, "g")
    fv = _to_values(domain, f, "f")
    B = domain.boundary
    X = domain.coords
    K = float(np.abs(fv).max())
    g_sup = float(np.abs(gv[B]).max())

    R = domain.spec.R
    R1, a, M = barrier_constants(lam, Lam, d, R, domain.diameter, K, g_sup)

    # paraboloid cap
    x0 = np.zeros(d)
    x0[0] = -(float(np.abs(X[:, 0]).max()) + 1.0)
    K1 = max(K, lam * d)
    c = K1 / (2.0 * lam * d)
    dist2 = ((X - x0) ** 2).sum(axis=1)
    K2 = g_sup + c * float(dist2.max())
    w = K2 - c * dist2

    # exterior-ball profiles.  On a lattice the ball centred at y + R n(y) may
    # first meet a different node; that node is the anchor where w_y vanishes.
    centres = X[B] + R * _outward_normals(domain, B)
    r_all = np.sqrt(((X[None, :, :] - centres[:, None, :]) ** 2).sum(-1))  # (|B|, N)
    anchor = r_all.argmin(axis=1)
    keep = ~domain.is_interior[anchor]
    anchor, r_all = anchor[keep], r_all[keep]
    _, first = np.unique(anchor, return_index=True)
    anchor, r_all = anchor[first], r_all[first]
    R_y = r_all[np.arange(len(anchor)), anchor]
    prof = np.maximum(M * (R_y[:, None] ** (-a) - r_all ** (-a)), 0.0)
    prof_b = prof[:, B]
    zero_tol = 1e-12 * M * R ** (-a)
    g_anchor = gv[anchor]

    etas = tuple(2.0 ** (-k) for k in range(1, int(eta_levels) + 1))
    C_list = []
    skipped = 0
    dg = gv[B][None, :] - g_anchor[:, None]  # g(z) - g(anchor)
    for eta in etas:
        need = dg - eta
        flat = prof_b <= zero_tol
        blocked = (flat & (need > 1e-12)).any(axis=1)
        skipped += int(blocked.sum())
        ok = ~blocked
        ratio = np.where(~flat & (need > 0), need / np.where(flat, 1.0, prof_b), 0.0)
        C = max(1.0, float(ratio[ok].max()) if ok.any() else 1.0)
        C_list.append(C)
        if ok.any():
            cand = g_anchor[ok, None] + eta + C * prof[ok]
            w = np.minimum(w, cand.min(axis=0))

    spec = BarrierSpec(tuple(float(v) for v in x0), K, K1, K2, R, R1, a, M, g_sup, lam, Lam, d,
                       etas, tuple(C_list), skipped=skipped)
    spec.check()
    if (w[B] < gv[B] - 1e-12 * max(1.0, g_sup)).any():
        raise ConfigurationError("barrier fell below the boundary data", "barrier")
    spec.anchors = len(anchor)
    spec.tightness = float((w[anchor] - gv[anchor]).max()) if len(anchor) else math.inf
    return GridFunction(domain, w), spec


def build_barrier_sub(g, f, domain: Domain, op, eta_levels=DEFAULT_ETA_LEVELS):
    """Global subsolution: minus the supersolution for ``(-g, -f)``.

    The construction only uses ``lam``, ``Lam`` and ``d``, which the mirrored
    operator ``M -> -F(-M)`` shares with ``F``.
    """
    gv = _to_values(domain, g, "g")
    fv = _to_values(domain, f, "f")
    w, spec = build_barrier_super(-gv, -fv, domain, op, eta_levels)
    return GridFunction(domain, -w.values), spec


@dataclass
class BarrierCheckReport:
    passed: bool
    worst_margin: float
    tol: float
    violations: list = field(default_factory=list)  # (node, coords, margin)

    def summary(self):
        state = "pass" if self.passed else f"fail at {len(self.violations)} nodes"
        return f"{state}; worst margin {self.worst_margin:.6g} (tol {self.tol:g})"


def _check(w, eps, theta, f, op, tol, sign, gradient):
    dom = w.domain
    res = regularized_residual(dom, w.values, theta, eps, f, op, gradient)
    margin = sign * res
    if tol is None:
        fv = _to_values(dom, f, "f")
        tol = 1e-9 * max(1.0, float(np.abs(fv).max()))
    bad = np.flatnonzero(margin < -tol)
    nodes = dom.interior[bad]
    viol = [(int(n), tuple(dom.coords[n]), float(margin[b])) for n, b in zip(nodes, bad)]
    worst = float(margin.min()) if margin.size else math.inf
    return BarrierCheckReport(not viol, worst, tol, viol)


def check_discrete_supersolution(w: GridFunction, eps, theta, f, op, tol=None,
                                 gradient=DEFAULT_GRADIENT):
    """Report nodes where the regularized residual of ``w`` drops below ``-tol``."""
    return _check(w, eps, theta, f, op, tol, 1.0, gradient)


def check_discrete_subsolution(w: GridFunction, eps, theta, f, op, tol=None,
                               gradient=DEFAULT_GRADIENT):
    """Report nodes where the regularized residual of ``w`` exceeds ``tol``."""
    return _check(w, eps, theta, f, op, tol, -1.0, gradient)
