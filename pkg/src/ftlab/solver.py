"""Grid solver for the regularized transmission equation and its fixed point.

For ``0 < eps < 1`` and an exponent field ``theta`` the regularized equation
at an interior node reads

    (eps + |grad_h u|)^theta * (eps*u + F_h(u)) = f,

with ``|grad_h u|`` a kink-aware central-difference gradient magnitude (see
:func:`gradient_magnitude`) and ``F_h`` the wide-stencil operator.  The
exponent field is rebuilt from the current iterate (``v -> theta_eps^v``),
the resulting map is iterated to a fixed point, and ``eps`` is driven
towards the grid scale by continuation.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .degeneracy import DegeneracyParams, ExponentField, constant_theta, theta_field
from .errors import ConfigurationError, NonConvergenceError, NumericalFailureError
from .grid import Domain, GridFunction, axis_frame, gradient_central
from .operators import EllipticOperatorSpec

log = logging.getLogger(__name__)


class Schedule(str, enum.Enum):
    HARMONIC = "harmonic"  # eps_n = 1/(n+1)
    GEOMETRIC = "geometric"  # eps_n = 2^-n


class Gradient(str, enum.Enum):
    KINK_AWARE = "kink_aware"  # central, plus a smooth term at discrete extrema
    CENTRAL = "central"


DEFAULT_GRADIENT = Gradient.KINK_AWARE


def _axis_magnitude_sq(fwd, bwd, kind):
    """Per-axis contribution to ``|grad_h u|^2`` and its derivatives in (fwd, bwd)."""
    central = 0.5 * (fwd + bwd)
    val = central ** 2
    d_f = central * np.ones_like(fwd)
    d_b = central * np.ones_like(bwd)
    if kind is Gradient.KINK_AWARE:
        q = np.maximum(-fwd * bwd, 0.0)
        den = fwd ** 2 + bwd ** 2
        safe = np.where(den > 0, den, 1.0)
        active = q > 0
        val = val + np.where(active, q ** 2 / safe, 0.0)
        d_f = d_f + np.where(active, (-2.0 * q * bwd * safe - 2.0 * q ** 2 * fwd) / safe ** 2, 0.0)
        d_b = d_b + np.where(active, (-2.0 * q * fwd * safe - 2.0 * q ** 2 * bwd) / safe ** 2, 0.0)
    return val, d_f, d_b


def gradient_magnitude(domain: Domain, values, kind=DEFAULT_GRADIENT):
    """Discrete ``|grad u|`` at interior nodes and its stencil derivatives.

    Returns ``(norm, weights)`` where ``weights[k]`` is a triple of arrays,
    the derivatives of ``norm`` in ``u(x+h e_k)``, ``u(x)`` and ``u(x-h e_k)``.

    Central differences cannot see a kink sitting on a node (the two sides
    cancel), which lets a spurious corner survive where the equation
    degenerates.  ``KINK_AWARE`` adds, per axis, ``max(0, -f b)^2 / (f^2 + b^2)``
    to the squared central difference, with ``f`` and ``b`` the one-sided
    differences.  The extra term vanishes unless ``u`` has a discrete
    extremum along the axis, so the magnitude is exact for affine data and
    second order where ``u`` is monotone; it is C^1 away from flat spots,
    which keeps Newton's method locally quadratic.
    """
    kind = Gradient(kind)
    h = domain.h
    c = values[domain.interior]
    total = np.zeros(len(c))
    parts = []
    for e in axis_frame(domain.dim):
        up = values[domain.interior_neighbor(e)]
        dn = values[domain.interior_neighbor(tuple(-x for x in e))]
        val, d_f, d_b = _axis_magnitude_sq((up - c) / h, (c - dn) / h, kind)
        total += val
        parts.append((d_f, d_b))
    norm = np.sqrt(total)
    inv = np.where(norm > 0, 0.5 / np.where(norm > 0, norm, 1.0), 0.0) / h
    weights = [(d_f * inv, (d_b - d_f) * inv, -d_b * inv) for d_f, d_b in parts]
    return norm, weights


def _node_gradient_norm(pairs, kind):
    """Scalar version of :func:`gradient_magnitude` from (fwd, bwd) pairs."""
    sq = 0.0
    for fwd, bwd in pairs:
        sq += 0.25 * (fwd + bwd) ** 2
        if Gradient(kind) is Gradient.KINK_AWARE and fwd * bwd < 0:
            sq += (fwd * bwd) ** 2 / (fwd ** 2 + bwd ** 2)
    return math.sqrt(sq)


def gradient_norm(domain: Domain, values, kind=DEFAULT_GRADIENT):
    return gradient_magnitude(domain, values, kind)[0]


@dataclass
class SolveConfig:
    tol_inner: float = 1e-9
    tol_fixed_point: float = 1e-8
    tol_continuation: float = 1e-6
    damping: float = 1.0
    pseudo_time_step: float = 1e-2
    max_inner_iters: int = 100
    max_outer_iters: int = 60
    max_continuation_steps: int = 40
    epsilon_schedule: Schedule = Schedule.GEOMETRIC
    method: str = "newton"  # or "gauss_seidel"
    residual_form: str = "product"  # Newton merit: "reduced" or "product"
    gradient: Gradient = DEFAULT_GRADIENT
    keep_snapshots: bool = False

    def __post_init__(self):
        self.epsilon_schedule = Schedule(self.epsilon_schedule)
        self.gradient = Gradient(self.gradient)
        for name in ("tol_inner", "tol_fixed_point", "tol_continuation", "pseudo_time_step"):
            if not getattr(self, name) > 0:
                raise ConfigurationError("must be positive", f"solver.{name}")
        if not 0 < self.damping <= 1:
            raise ConfigurationError("must lie in (0, 1]", "solver.damping")
        for name in ("max_inner_iters", "max_outer_iters", "max_continuation_steps"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError("must be a positive integer", f"solver.{name}")
        if self.method not in ("newton", "gauss_seidel"):
            raise ConfigurationError(f"unknown method {self.method!r}", "solver.method")
        if self.residual_form not in ("reduced", "product"):
            raise ConfigurationError(f"unknown form {self.residual_form!r}", "solver.residual_form")

    def epsilon(self, n):
        if self.epsilon_schedule is Schedule.HARMONIC:
            return 1.0 / (n + 1)
        return 2.0 ** (-n)


@dataclass
class SolveDiagnostics:
    """Convergence history of one solver call.

    ``inner`` holds one residual history per regularized solve, ``outer_deltas``
    the fixed-point changes ``|v_{k+1} - v_k|_inf``, ``continuation_deltas`` the
    changes between successive ``eps``.  ``trail`` flattens everything into rows
    ``(phase, eps, outer, iteration, residual, delta)`` for CSV output.
    """

    inner: list = field(default_factory=list)
    outer_deltas: list = field(default_factory=list)
    continuation_deltas: list = field(default_factory=list)
    epsilons: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    trail: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    converged: bool = False
    certificate: float = math.nan
    roundoff_floor: float = 0.0  # max per-node evaluation floor of the certificate
    theta: object = None  # exponent field of the last solve
    self_consistency: float = math.nan
    self_consistency_bound: float = math.nan
    cauchy: bool = False

    @property
    def residuals(self):
        return self.inner[-1] if self.inner else []

    def extend(self, other, eps=None, outer=None):
        self.inner.extend(other.inner)
        for row in other.trail:
            phase, e, o, it, res, d = row
            self.trail.append((phase, e if eps is None else eps, o if outer is None else outer,
                               it, res, d))


# --- residuals ----------------------------------------------------------------

def _interior_values(domain, theta, f):
    th = theta.values if isinstance(theta, GridFunction) else np.asarray(theta, float)
    fv = f.values if isinstance(f, GridFunction) else np.asarray(f, float)
    if th.shape == (domain.n_nodes,):
        th = th[domain.interior]
    if fv.shape == (domain.n_nodes,):
        fv = fv[domain.interior]
    return th, fv


def regularized_residual(domain: Domain, values, theta, eps, f, op: EllipticOperatorSpec,
                         gradient=DEFAULT_GRADIENT):
    """``(eps+|grad_h u|)^theta (eps*u + F_h u) - f`` at every interior node."""
    th, fv = _interior_values(domain, theta, f)
    F = op.discrete_all(domain, values)
    s = eps + gradient_norm(domain, values, gradient)
    return s ** th * (eps * values[domain.interior] + F) - fv


ROUNDOFF_ULPS = 4.0


def residual_floor(domain: Domain, values, theta, eps, f, op: EllipticOperatorSpec,
                   gradient=DEFAULT_GRADIENT):
    """Floating-point resolution of the regularized residual at each interior node.

    The residual is a difference of terms of size ``(eps+|p|)^theta`` times
    ``|u|/h^2``; a few ulps of that magnitude is the best any iterate can
    achieve.  Solvers accept ``|res| <= tol_inner + floor`` node by node.
    """
    th, fv = _interior_values(domain, theta, f)
    _, coeff = op.linearize(domain, values)
    c = np.abs(values[domain.interior])
    mag = eps * c
    for j, e in enumerate(domain.directions):
        if not coeff[:, j].any():
            continue
        up = np.abs(values[domain.interior_neighbor(e)])
        dn = np.abs(values[domain.interior_neighbor(tuple(-x for x in e))])
        mag = mag + np.abs(coeff[:, j]) * (up + 2.0 * c + dn) / (domain.h ** 2 * sum(x * x for x in e))
    s = eps + gradient_norm(domain, values, gradient)
    return ROUNDOFF_ULPS * np.finfo(float).eps * (s ** th * mag + np.abs(fv))


def _within(res, tol, floor):
    return res.size == 0 or bool((np.abs(res) <= tol + floor).all())


def residual_regularized(u: GridFunction, theta, eps, f, op, node, h=None,
                         gradient=DEFAULT_GRADIENT):
    """Regularized residual at a single interior node.

    Evaluated node by node from the raw stencil, independently of the
    vectorized path used inside the solvers.
    """
    dom = u.domain
    th = theta.values[node] if isinstance(theta, GridFunction) else float(theta)
    fv = f.values[node] if isinstance(f, GridFunction) else float(f)
    gradient = Gradient(gradient)
    if gradient is Gradient.CENTRAL:
        pn = float(np.linalg.norm(gradient_central(u, node, h)))
    else:
        hh = dom.h if h is None else h
        pairs = []
        for e in axis_frame(dom.dim):
            up = u.values[int(dom.neighbor(node, e)[0])]
            dn = u.values[int(dom.neighbor(node, tuple(-c for c in e))[0])]
            pairs.append(((up - u.values[node]) / hh, (u.values[node] - dn) / hh))
        pn = _node_gradient_norm(pairs, gradient)
    F = op.apply_discrete(u, node, h)
    return (eps + pn) ** th * (eps * u.values[node] + F) - fv


# --- inner solvers ------------------------------------------------------------

class _System:
    """Residual of the regularized equation at interior nodes and its Jacobian.

    ``form="reduced"`` divides through by ``(eps+|p|)^theta``, giving
    ``eps*u + F_h u - f (eps+|p|)^-theta`` whose principal part is an M-matrix;
    ``form="product"`` keeps ``(eps+|p|)^theta (eps*u + F_h u) - f``, which is
    bounded where the gradient vanishes.  The Jacobian is the generalized one
    for the active stencil branch and gradient choice.
    """

    def __init__(self, domain, theta_int, eps, f_int, op, gradient, form="reduced"):
        self.domain, self.theta, self.eps, self.f, self.op = domain, theta_int, eps, f_int, op
        self.gradient = gradient
        self.form = form
        pos = -np.ones(domain.n_nodes, dtype=np.int64)
        pos[domain.interior] = np.arange(len(domain.interior))
        self.pos = pos

    def _matrix(self, triples):
        n = len(self.domain.interior)
        rows = np.concatenate([t[0] for t in triples])
        cols = np.concatenate([t[1] for t in triples])
        data = np.concatenate([t[2] for t in triples])
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))

    def _neighbour_triple(self, e, w):
        nb = self.pos[self.domain.interior_neighbor(e)]
        mask = nb >= 0
        return np.flatnonzero(mask), nb[mask], w[mask]

    def floor(self, values):
        return residual_floor(self.domain, values, self.theta, self.eps, self.f, self.op,
                              self.gradient)

    def evaluate(self, values, jacobian=False):
        dom, eps = self.domain, self.eps
        F, coeff = self.op.linearize(dom, values)
        pn, gw = gradient_magnitude(dom, values, self.gradient)
        s = eps + pn
        base = eps * values[dom.interior] + F
        sth = s ** self.theta
        reduced = base - self.f / sth
        original = sth * base - self.f
        main = reduced if self.form == "reduced" else original
        if not jacobian:
            return main, original, None
        n = len(dom.interior)
        idx = np.arange(n)
        # d(base)/du
        trip = [(idx, idx, np.full(n, eps))]
        h2 = dom.h ** 2
        for j, e in enumerate(dom.directions):
            w = coeff[:, j] / (h2 * sum(c * c for c in e))
            if not w.any():
                continue
            trip.append((idx, idx, -2.0 * w))
            trip.append(self._neighbour_triple(e, w))
            trip.append(self._neighbour_triple(tuple(-c for c in e), w))
        Jb = self._matrix(trip)
        # d|p|/du
        trip = []
        for k, e in enumerate(axis_frame(dom.dim)):
            w_up, w_c, w_dn = gw[k]
            trip.append((idx, idx, w_c))
            trip.append(self._neighbour_triple(e, w_up))
            trip.append(self._neighbour_triple(tuple(-c for c in e), w_dn))
        Jp = self._matrix(trip)
        if self.form == "reduced":
            J = Jb + sp.diags(self.f * self.theta * s ** (-self.theta - 1.0)) @ Jp
        else:
            J = sp.diags(sth) @ Jb + sp.diags(self.theta * s ** (self.theta - 1.0) * base) @ Jp
        return main, original, J.tocsr()


def _finite_or_fail(values, diag, what):
    if not np.isfinite(values).all():
        raise NumericalFailureError(f"non-finite values in {what}", diagnostics=diag)


def _newton(system, values, cfg, hist, shift=None, tol=None, budget=None):
    """Damped Newton with a pseudo-transient fallback for ``R(u) = shift``.

    While Newton steps reduce the residual they are taken (with Armijo
    backtracking).  Otherwise the iteration switches to pseudo-transient
    continuation, solving ``(J + I/dt) step = -r`` and growing ``dt`` at least
    twofold after each step that lowers the residual; the merit may rise
    temporarily in this phase, which lets it leave nonconvex valleys of the
    residual.  Once ``dt`` is large the method is Newton again.

    Without ``shift`` convergence means the sup of the regularized residual is
    at most ``cfg.tol_inner``; with a shift, ``|R(u) - shift|_inf <= tol``.
    """
    I = system.domain.interior
    x = values.copy()
    ptc = False
    dt = cfg.pseudo_time_step
    eye = None
    budget = cfg.max_inner_iters if budget is None else budget

    def merit_of(y):
        r = system.evaluate(y)[0]
        return r if shift is None else r - shift

    for it in range(budget):
        main, original, J = system.evaluate(x, jacobian=True)
        if shift is not None:
            main = main - shift
            res = float(np.abs(main).max()) if main.size else 0.0
            done = res <= tol
        else:
            res = float(np.abs(original).max()) if original.size else 0.0
            done = res <= cfg.tol_inner or (
                res <= 1e3 * cfg.tol_inner and _within(original, cfg.tol_inner, system.floor(x)))
        hist.append(res)
        if not math.isfinite(res):
            return x, False
        if done:
            return x, True
        merit = float(np.linalg.norm(main))
        if not ptc:
            try:
                step = spla.spsolve(J.tocsc(), -main)
                ok = bool(np.isfinite(step).all())
            except RuntimeError:
                ok = False
            t = cfg.damping
            while ok and t > 1e-4:
                trial = x.copy()
                trial[I] += t * step
                m_new = float(np.linalg.norm(merit_of(trial)))
                if math.isfinite(m_new) and m_new <= (1.0 - 1e-4 * t) * merit:
                    x = trial
                    break
                t *= 0.5
            else:
                ptc, dt = True, cfg.pseudo_time_step
            continue
        if eye is None:
            eye = sp.identity(J.shape[0], format="csr")
        for _ in range(40):
            try:
                step = spla.spsolve((J + eye / dt).tocsc(), -main)
                ok = bool(np.isfinite(step).all())
            except RuntimeError:
                ok = False
            if ok:
                trial = x.copy()
                trial[I] += cfg.damping * step
                m_new = float(np.linalg.norm(merit_of(trial)))
                if math.isfinite(m_new) and m_new <= 2.0 * merit:
                    x = trial
                    if m_new < merit:
                        dt = min(dt * max(2.0, merit / max(m_new, 1e-300)), 1e12)
                    break
            dt *= 0.25
        else:
            return x, False
        if dt >= 1e6:
            ptc = False
    return x, False


def _forms(cfg):
    return [cfg.residual_form] + [fm for fm in ("reduced", "product") if fm != cfg.residual_form]


def _stage(dom, th_int, eps, f_int, op, cfg, x0, diag, budget=None):
    """Newton on one regularized problem, trying each residual form in turn.

    Both forms describe the same discrete equation, so the second is only a
    different path to the same root.  Every attempt gets its own history.
    """
    for form in _forms(cfg):
        hist = []
        diag.inner.append(hist)
        system = _System(dom, th_int, eps, f_int, op, cfg.gradient, form)
        x, ok = _newton(system, x0, cfg, hist, budget=budget)
        if ok:
            return x, True
        log.debug("%s-form Newton stalled at eps=%g", form, eps)
    return x0, False


def _parameter_path(dom, warm, th1, eps1, f_int, op, cfg, x0, diag, max_stages=64):
    """Track the solution from a solved problem ``warm = (theta0, eps0)`` to ``(th1, eps1)``.

    Intermediate problems blend the exponents linearly and ``eps``
    geometrically; each is again a regularized equation, so every stage is a
    well-posed solve started next to its root.  Steps double after a success
    and shrink fourfold after a failure.
    """
    th0, eps0 = warm
    x, t, step = x0, 0.0, 0.5
    budget = min(cfg.max_inner_iters, 40)
    for _ in range(max_stages):
        t_new = min(1.0, t + step)
        th = (1.0 - t_new) * th0 + t_new * th1
        eps = eps0 ** (1.0 - t_new) * eps1 ** t_new
        y, ok = _stage(dom, th, eps, f_int, op, cfg, x, diag, budget=budget)
        if ok:
            x, t = y, t_new
            if t >= 1.0:
                return x, True
            step = min(2.0 * step, 1.0 - t)
        else:
            log.debug("parameter path: stage t=%.6f failed, shrinking step", t_new)
            step *= 0.25
            if step < 1e-5:
                break
    log.debug("parameter path stopped at t=%.6f", t)
    return x, False


def _residual_homotopy(system, x0, cfg, diag, max_stages=64):
    """Follow ``R(u) = (1 - t) R(u_0)`` from the initial iterate (exact at t=0)."""
    r0 = system.evaluate(x0)[0]
    scale = max(1.0, float(np.abs(r0).max()) if r0.size else 0.0)
    x, t, step = x0.copy(), 0.0, 0.25
    budget = min(cfg.max_inner_iters, 40)
    for _ in range(max_stages):
        t_new = min(1.0, t + step)
        hist = []
        diag.inner.append(hist)
        if t_new >= 1.0:
            y, ok = _newton(system, x, cfg, hist, budget=budget)
        else:
            y, ok = _newton(system, x, cfg, hist, shift=(1.0 - t_new) * r0,
                            tol=1e-6 * scale, budget=budget)
        if ok:
            x, t = y, t_new
            if t >= 1.0:
                return x, True
            step = min(2.0 * step, 1.0)
        else:
            step *= 0.25
            if step < 1e-6:
                break
    return x, False


def _newton_solve(dom, th_int, eps, f_int, op, cfg, x0, diag, warm=None):
    """Direct Newton, then a parameter path from ``warm``, then a residual path."""
    budget = min(cfg.max_inner_iters, 30) if warm is not None else None
    x, ok = _stage(dom, th_int, eps, f_int, op, cfg, x0, diag, budget=budget)
    if ok:
        return x, True
    if warm is not None:
        th0 = np.asarray(warm[0], dtype=float)
        if th0.shape == (dom.n_nodes,):
            th0 = th0[dom.interior]
        x, ok = _parameter_path(dom, (th0, float(warm[1])), th_int, eps, f_int, op, cfg, x0, diag)
        if ok:
            return x, True
    system = _System(dom, th_int, eps, f_int, op, cfg.gradient, "reduced")
    return _residual_homotopy(system, x0, cfg, diag)


def _nodal_solve(op, dom, deltas_base, scale, eps, target, c0):
    """Solve ``eps*c + F_h(c) = target`` for the centre value by bisection.

    ``deltas_base[e]`` is ``u(x+he) + u(x-he)``; ``F_h`` is nondecreasing in
    ``c`` so the left side is strictly increasing.
    """

    def phi(c):
        deltas = {e: (a - 2.0 * c) / scale[e] for e, a in deltas_base.items()}
        return eps * c + op.value_from_deltas(deltas, dom.dim) - target

    step = max(1.0, abs(c0))
    lo, hi = c0 - step, c0 + step
    while phi(lo) > 0:
        lo -= step
        step *= 2.0
    step = max(1.0, abs(c0))
    while phi(hi) < 0:
        hi += step
        step *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if phi(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _gauss_seidel(system, values, cfg, hist):
    dom, op, eps = system.domain, system.op, system.eps
    dirs = op.stencil_directions(dom.dim)
    nbs = {}
    for e in dirs + axis_frame(dom.dim):
        for sgn in (1, -1):
            ee = tuple(sgn * c for c in e)
            nbs[ee] = dom.interior_neighbor(ee)
    scale = {e: dom.h ** 2 * sum(c * c for c in e) for e in dirs}
    x = values.copy()
    for it in range(cfg.max_inner_iters):
        original = system.evaluate(x)[1]
        res = float(np.abs(original).max()) if original.size else 0.0
        hist.append(res)
        if not math.isfinite(res):
            return x, False
        if res <= cfg.tol_inner or _within(original, cfg.tol_inner, system.floor(x)):
            return x, True
        for k, node in enumerate(dom.interior):
            # gradient lagged at the current centre value during the scalar solve
            pairs = []
            for e in axis_frame(dom.dim):
                up, dn = x[nbs[e][k]], x[nbs[tuple(-c for c in e)][k]]
                pairs.append(((up - x[node]) / dom.h, (x[node] - dn) / dom.h))
            s = eps + _node_gradient_norm(pairs, system.gradient)
            target = system.f[k] / s ** system.theta[k]
            base = {e: x[nbs[e][k]] + x[nbs[tuple(-c for c in e)][k]] for e in dirs}
            c = _nodal_solve(op, dom, base, scale, eps, target, x[node])
            x[node] += cfg.damping * (c - x[node])
    original = system.evaluate(x)[1]
    return x, _within(original, cfg.tol_inner, system.floor(x))


def _boundary_values(g, domain):
    gv = g.values if isinstance(g, GridFunction) else np.asarray(g, dtype=float)
    if gv.shape != (domain.n_nodes,):
        raise ConfigurationError("boundary data must be a grid function on the domain")
    return gv[domain.boundary]


def solve_regularized(v, eps, f, g, op, cfg: SolveConfig, params: DegeneracyParams | None = None,
                      theta=None, initial=None, warm=None):
    """Solve the regularized equation with exponent field ``theta_eps^v``.

    Either ``params`` (to build the exponent from ``v``) or an explicit
    ``theta`` must be given.  ``warm = (theta0, eps0)`` states that
    ``initial`` solves the problem with those parameters; Newton then falls
    back to tracking the solution along a path between the two problems.
    Boundary nodes carry ``g`` exactly; the returned diagnostics include an
    independently recomputed residual certificate.
    """
    dom = (v if v is not None else f).domain
    if not 0 < eps < 1:
        raise ConfigurationError("epsilon must lie in (0, 1)")
    if theta is None:
        if params is None:
            raise ConfigurationError("need DegeneracyParams or an explicit theta field")
        theta = theta_field(v, params.with_epsilon(eps))
    th_int, f_int = _interior_values(dom, theta, f)
    start = initial if initial is not None else v
    x = (start.values if start is not None else np.zeros(dom.n_nodes)).astype(float).copy()
    x[dom.boundary] = _boundary_values(g, dom)
    diag = SolveDiagnostics()
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if cfg.method == "gauss_seidel":
            hist = []
            diag.inner.append(hist)
            system = _System(dom, th_int, eps, f_int, op, cfg.gradient)
            x, ok = _gauss_seidel(system, x, cfg, hist)
        else:
            x, ok = _newton_solve(dom, th_int, eps, f_int, op, cfg, x, diag, warm)
    n_iter = 0
    for hist in diag.inner:
        for r in hist:
            diag.trail.append(("inner", eps, 0, n_iter, r, math.nan))
            n_iter += 1
    if not np.isfinite(x).all():
        raise NumericalFailureError("non-finite iterate in regularized solve", diagnostics=diag)
    res = regularized_residual(dom, x, th_int, eps, f_int, op, cfg.gradient)
    floor = residual_floor(dom, x, th_int, eps, f_int, op, cfg.gradient)
    diag.certificate = float(np.abs(res).max()) if res.size else 0.0
    diag.roundoff_floor = float(floor.max()) if floor.size else 0.0
    diag.converged = ok and _within(res, cfg.tol_inner, floor)
    if not math.isfinite(diag.certificate):
        raise NumericalFailureError("non-finite residual", diagnostics=diag,
                                    partial=GridFunction(dom, x))
    u = GridFunction(dom, x)
    u_theta = theta if isinstance(theta, GridFunction) else None
    diag.theta = u_theta
    if not diag.converged:
        raise NonConvergenceError(
            f"regularized solve did not reach tol_inner={cfg.tol_inner:g} "
            f"(residual {diag.certificate:.3e} after {n_iter} Newton/sweep iterations)",
            diagnostics=diag, partial=u)
    return u, diag


def _self_consistency(u, eps, f, op, params, v_prev, gradient):
    """Residual of ``u`` against its own exponent field, and the a-priori bound.

    ``theta_eps`` is ``(theta2-theta1)/(2 eps)``-Lipschitz in ``v`` (sup norm),
    so swapping ``theta(v_prev)`` for ``theta(u)`` moves the residual by at most
    ``max |s^th log(s) (eps*u + F_h u)| * (theta2-theta1) |u-v_prev| / (2 eps)``.
    """
    dom = u.domain
    p_eps = params.with_epsilon(eps)
    th_u = theta_field(u, p_eps).values[dom.interior]
    th_v = theta_field(v_prev, p_eps).values[dom.interior]
    res = regularized_residual(dom, u.values, th_u, eps, f, op, gradient)
    s = eps + gradient_norm(dom, u.values, gradient)
    base = eps * u.values[dom.interior] + op.discrete_all(dom, u.values)
    sens = np.maximum(s ** th_u, s ** th_v) * np.abs(np.log(s)) * np.abs(base)
    delta = float(np.abs(u.values - v_prev.values).max())
    slope = float(sens.max()) if sens.size else 0.0
    bound = slope * (params.theta2 - params.theta1) * delta / (2.0 * eps)
    return (float(np.abs(res).max()) if res.size else 0.0), bound


def fixed_point_T(eps, f, g, op, params: DegeneracyParams, cfg: SolveConfig, initial=None,
                  warm=None):
    """Iterate ``v -> T v`` (solve with exponent ``theta_eps^v``) to a fixed point.

    From a cold start ``v_0`` solves the equation with the frozen midpoint
    exponent.  With ``warm = (theta0, eps0)``, meaning ``initial`` solves the
    problem with those parameters (as along a continuation), ``v_0`` is
    ``initial`` itself.  When the change stops shrinking the next trial is the
    average of the last two iterates.  Exhausting ``max_outer_iters`` raises
    with both candidates.
    """
    dom = f.domain
    diag = SolveDiagnostics()
    p_eps = params.with_epsilon(eps)
    if warm is not None and initial is not None:
        # continuation warm start: the previous fixed point is the first trial
        v = initial.copy()
        v.values[dom.boundary] = _boundary_values(g, dom)
        last, last_theta = initial, ExponentField(dom, np.asarray(warm[0], dtype=float))
        if last_theta.values.shape != (dom.n_nodes,):
            raise ConfigurationError("warm theta must be given on all nodes")
        warm_eps = float(warm[1])
    else:
        mid = constant_theta(dom, params.midpoint)
        v, d0 = solve_regularized(initial, eps, f, g, op, cfg, theta=mid, initial=initial)
        diag.extend(d0, eps=eps, outer=0)
        last, last_theta, warm_eps = v, mid, eps
    prev_delta = math.inf
    for k in range(1, cfg.max_outer_iters + 1):
        theta = theta_field(v, p_eps)
        try:
            u, dk = solve_regularized(v, eps, f, g, op, cfg, theta=theta, initial=last,
                                      warm=(last_theta.values, warm_eps))
        except (NonConvergenceError, NumericalFailureError) as exc:
            if exc.diagnostics is not None:
                diag.extend(exc.diagnostics, eps=eps, outer=k)
            exc.diagnostics = diag
            raise
        diag.extend(dk, eps=eps, outer=k)
        delta = float(np.abs(u.values - v.values).max())
        diag.outer_deltas.append(delta)
        diag.trail.append(("outer", eps, k, len(dk.residuals), dk.certificate, delta))
        last, last_theta, warm_eps = u, theta, eps
        if delta <= cfg.tol_fixed_point:
            diag.converged = True
            diag.certificate = dk.certificate
            diag.theta = theta
            diag.self_consistency, bound = _self_consistency(u, eps, f, op, params, v, cfg.gradient)
            diag.self_consistency_bound = cfg.tol_inner + bound
            if diag.self_consistency > diag.self_consistency_bound * (1 + 1e-9) + 1e-14:
                diag.warnings.append(
                    f"self-consistency residual {diag.self_consistency:.3e} exceeds bound "
                    f"{diag.self_consistency_bound:.3e}")
            return u, diag
        if delta >= 0.9 * prev_delta:
            log.debug("fixed point stalled at eps=%g (delta %.3e); averaging", eps, delta)
            v = GridFunction(dom, 0.5 * (u.values + v.values))
        else:
            v = u
        prev_delta = delta
    raise NonConvergenceError(
        f"fixed-point iteration did not settle within {cfg.max_outer_iters} steps "
        f"(last change {diag.outer_deltas[-1]:.3e}); candidates attached",
        diagnostics=diag, partial=(v, u))


def continuation(f, g, op, params: DegeneracyParams, cfg: SolveConfig, initial=None,
                 floor=None):
    """Run the fixed point along the eps schedule down to ``floor`` (default h).

    Stops when successive solutions differ by at most ``tol_continuation`` or
    the floor has been solved; exhausting ``max_continuation_steps`` first is
    reported as a non-Cauchy warning and the last solution is still returned.
    """
    dom = f.domain
    floor = dom.h if floor is None else floor
    if not 0 < floor < 1:
        raise ConfigurationError("continuation floor must lie in (0, 1)")
    diag = SolveDiagnostics()
    u_prev, warm = initial, None
    for n in range(1, cfg.max_continuation_steps + 1):
        eps = max(cfg.epsilon(n), floor)
        try:
            u, dn = fixed_point_T(eps, f, g, op, params, cfg, initial=u_prev, warm=warm)
        except (NonConvergenceError, NumericalFailureError) as exc:
            if exc.diagnostics is not None:
                diag.extend(exc.diagnostics)
                diag.outer_deltas.extend(exc.diagnostics.outer_deltas)
            diag.epsilons.append(eps)
            exc.diagnostics = diag
            raise
        diag.extend(dn)
        diag.outer_deltas.extend(dn.outer_deltas)
        diag.epsilons.append(eps)
        diag.warnings.extend(dn.warnings)
        diag.certificate = dn.certificate
        diag.self_consistency = dn.self_consistency
        diag.self_consistency_bound = dn.self_consistency_bound
        if cfg.keep_snapshots:
            diag.snapshots[eps] = u
        if u_prev is not None and n > 1:
            delta = float(np.abs(u.values - u_prev.values).max())
            diag.continuation_deltas.append(delta)
            diag.trail.append(("continuation", eps, n, 0, dn.certificate, delta))
            if delta <= cfg.tol_continuation:
                diag.cauchy = True
                diag.converged = True
                return u, diag
        u_prev, warm = u, (dn.theta.values, eps)
        if eps <= floor:
            diag.converged = True
            return u, diag
    diag.converged = True
    diag.warnings.append(
        f"schedule exhausted after {cfg.max_continuation_steps} steps without meeting "
        f"tol_continuation={cfg.tol_continuation:g} (non-Cauchy)")
    log.warning(diag.warnings[-1])
    return u_prev, diag
