"""Free-boundary extraction and gradient Hoelder measurements.

The affine-approximation error ``E(r) = min_l max_{B_r(x0)} |u - l|`` of a
``C^{1,a}`` function decays like ``r^(1+a)``, so the slope of ``log E``
against ``log r`` over geometric radii estimates ``1 + a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import ConfigurationError, ResolutionError
from .grid import GridFunction, fmt, gradients_interior

SMOOTH_THRESHOLD = 1e-10
FIT_RESIDUAL_MAX = 0.1


def extract_free_boundary(u: GridFunction, sign_tol=0.0):
    """``(omega_plus, omega_minus, free_boundary)`` as sorted node index arrays.

    The free boundary holds the nodes of neither phase that touch a phase
    through a stencil edge, plus both ends of every edge joining the phases.
    """
    if sign_tol < 0:
        raise ConfigurationError("sign_tol must be >= 0", "regularity.sign_tol")
    dom = u.domain
    v = u.values
    plus = v > sign_tol
    minus = v < -sign_tol
    signed = plus | minus
    fb = np.zeros(dom.n_nodes, dtype=bool)
    nodes = np.arange(dom.n_nodes)
    for e in dom.directions:
        for sgn in (1, -1):
            nb = dom.neighbor(nodes, tuple(sgn * c for c in e))
            ok = nb >= 0
            a, b = nodes[ok], nb[ok]
            fb[a[~signed[a] & signed[b]]] = True
            cross = (plus[a] & minus[b]) | (minus[a] & plus[b])
            fb[a[cross]] = True
            fb[b[cross]] = True
    return np.flatnonzero(plus), np.flatnonzero(minus), np.flatnonzero(fb)


@dataclass
class AffineFit:
    a: float  # value at x0
    b: np.ndarray  # slope
    x0: np.ndarray
    error: float
    nodes: int

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.a + (x - self.x0) @ self.b


def _ball_nodes(dom, x0, r):
    d2 = ((dom.coords - x0) ** 2).sum(axis=1)
    return np.flatnonzero(d2 <= r * r * (1 + 1e-12) + 1e-24)


def _polish(Y, vals, coef):
    """Re-solve the minimax fit on its reference set in exact arithmetic form.

    The LP solution identifies ``d + 2`` extremal nodes with alternating
    signs; solving ``vals - A coef = sign * E`` there gives the fit without
    the solver's feasibility slack.  Kept only if it is no worse.
    """
    A = np.hstack([np.ones((len(Y), 1)), Y])
    res = vals - A @ coef
    E = float(np.abs(res).max())
    if E == 0.0:
        return coef, 0.0
    k = A.shape[1] + 1
    order = np.argsort(-np.abs(res))[:k]
    sys = np.hstack([A[order], np.sign(res[order])[:, None]])
    try:
        sol = np.linalg.lstsq(sys, vals[order], rcond=None)[0]
    except np.linalg.LinAlgError:
        return coef, E
    c2 = sol[:-1]
    E2 = float(np.abs(vals - A @ c2).max())
    return (c2, E2) if E2 <= E else (coef, E)


def best_affine_error(u: GridFunction, x0, r):
    """Minimax affine fit of ``u`` over the nodes of the closed ball ``B_r(x0)``.

    Solved as the linear program ``min t`` subject to ``|u_i - a - b.(x_i - x0)|
    <= t``, then polished on the equioscillation set.
    """
    dom = u.domain
    x0 = np.asarray(x0, dtype=float).reshape(dom.dim)
    if not r > 0:
        raise ConfigurationError("radius must be positive", "regularity.radius")
    idx = _ball_nodes(dom, x0, r)
    d = dom.dim
    if len(idx) < d + 2:
        raise ResolutionError(f"B_{r:g}({x0}) holds {len(idx)} nodes; need at least {d + 2}")
    Y = (dom.coords[idx] - x0) / r
    vals = u.values[idx]
    A = np.hstack([np.ones((len(idx), 1)), Y])
    ls = np.linalg.lstsq(A, vals, rcond=None)[0]
    scale = max(1.0, float(np.abs(vals).max()))
    if float(np.abs(vals - A @ ls).max()) <= 1e-13 * scale:
        coef, E = ls, float(np.abs(vals - A @ ls).max())
    else:
        n, m = len(idx), d + 1
        c = np.zeros(m + 1)
        c[-1] = 1.0
        ones = np.ones((n, 1))
        A_ub = np.vstack([np.hstack([-A, -ones]), np.hstack([A, -ones])])
        b_ub = np.concatenate([-vals, vals])
        out = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * m + [(0, None)],
                      method="highs", options={"primal_feasibility_tolerance": 1e-10,
                                               "dual_feasibility_tolerance": 1e-10})
        coef = out.x[:m] if out.status == 0 else ls
        coef, E = _polish(Y, vals, coef)
    return AffineFit(float(coef[0]), coef[1:] / r, x0, E, len(idx))


@dataclass
class HolderFit:
    x0: tuple
    radii: np.ndarray
    errors: np.ndarray
    slope: float
    alpha_hat: float  # slope - 1, capped at 1 (see ``capped``)
    residual: float
    smooth: bool
    capped: bool = False
    reported: bool = True

    @property
    def alpha_raw(self):
        return self.slope - 1.0


def estimate_gradient_holder(u: GridFunction, x0, rho=0.5, n_scales=4, r0=None):
    """Fit ``log E(r_0 rho^k)`` against ``log r`` for ``k = 0..n_scales``.

    ``r0`` defaults to the domain extent.  A Hoelder exponent of the gradient
    lies in (0, 1], so a slope above 2 (the ``C^{1,1}`` rate) is reported as
    ``alpha_hat = 1`` with ``capped`` set; ``alpha_raw`` keeps the fit.
    """
    if not 0 < rho < 1:
        raise ConfigurationError("rho must lie in (0, 1)", "regularity.rho")
    if int(n_scales) < 1:
        raise ConfigurationError("need at least one scale", "regularity.n_scales")
    dom = u.domain
    r0 = dom.spec.extent if r0 is None else float(r0)
    radii = r0 * rho ** np.arange(int(n_scales) + 1)
    if radii[-1] < 4 * dom.h * (1 - 1e-12):
        raise ResolutionError(
            f"smallest radius {radii[-1]:g} is below 4h = {4 * dom.h:g}")
    errs = np.array([best_affine_error(u, x0, r).error for r in radii])
    x0t = tuple(float(c) for c in np.atleast_1d(x0))
    if errs[-1] < SMOOTH_THRESHOLD or (errs <= 0).any():
        return HolderFit(x0t, radii, errs, math.nan, math.nan, 0.0, True, reported=False)
    lr, le = np.log(radii), np.log(errs)
    slope, icpt = np.polyfit(lr, le, 1)
    resid = float(np.sqrt(np.mean((le - (slope * lr + icpt)) ** 2)))
    alpha = float(slope - 1.0)
    capped = alpha > 1.0
    reported = len(radii) >= 4 and resid <= FIT_RESIDUAL_MAX
    return HolderFit(x0t, radii, errs, float(slope), min(alpha, 1.0), resid, False, capped, reported)


@dataclass(frozen=True)
class PredictedExponent:
    alpha: float
    attained: bool
    annotation: str


def predicted_exponent(theta2, alpha0=1.0):
    """``min(alpha0, 1/(1+theta2))`` with its attainability."""
    if not theta2 > 0:
        raise ConfigurationError("theta2 must be positive", "regularity.theta2")
    if not 0 < alpha0 <= 1:
        raise ConfigurationError("alpha0 must lie in (0, 1]", "regularity.alpha0")
    star = 1.0 / (1.0 + theta2)
    if star >= alpha0 and alpha0 < 1:
        return PredictedExponent(alpha0, False, "supremum, not attained: any alpha < alpha0")
    return PredictedExponent(min(star, alpha0), True, "attained")


def default_alpha0(kind):
    """1 for the convex/concave built-ins, 0.75 for the convex combination."""
    return 0.75 if str(getattr(kind, "value", kind)) == "convex_combination" else 1.0


@dataclass
class C1AlphaCertificate:
    tau: float
    alpha: float
    seminorm: float
    normalizer: float
    ratio: float
    pairs: int


def c1alpha_certificate(u: GridFunction, tau, alpha, C0, theta2, x0=None):
    """Discrete ``[grad u]_alpha`` on ``B_tau(x0)`` over its normalizing bound.

    Gradients are central differences at interior nodes; node pairs closer
    than ``2h`` are skipped.
    """
    if not 0 < tau < 1:
        raise ConfigurationError("tau must lie in (0, 1)", "regularity.tau")
    if not 0 < alpha <= 1:
        raise ConfigurationError("alpha must lie in (0, 1]", "regularity.alpha")
    dom = u.domain
    x0 = np.zeros(dom.dim) if x0 is None else np.asarray(x0, dtype=float)
    G = gradients_interior(dom, u.values)
    X = dom.coords[dom.interior]
    sel = ((X - x0) ** 2).sum(axis=1) <= tau * tau * (1 + 1e-12)
    G, X = G[sel], X[sel]
    best, pairs = 0.0, 0
    min_sep = 2.0 * dom.h * (1 - 1e-9)
    chunk = max(1, 2_000_000 // max(1, len(X)))
    for s in range(0, len(X), chunk):
        dx = np.sqrt(((X[s:s + chunk, None, :] - X[None, :, :]) ** 2).sum(-1))
        dg = np.sqrt(((G[s:s + chunk, None, :] - G[None, :, :]) ** 2).sum(-1))
        ok = dx >= min_sep
        pairs += int(ok.sum())
        if ok.any():
            best = max(best, float((dg[ok] / dx[ok] ** alpha).max()))
    norm = float(np.abs(u.values).max()) + max(C0, C0 ** (1.0 / (1.0 + theta2)))
    ratio = best / norm if norm > 0 else (0.0 if best == 0 else math.inf)
    return C1AlphaCertificate(float(tau), float(alpha), best, norm, ratio, pairs // 2)


@dataclass
class ProbeRecord:
    x0: tuple
    fit: HolderFit | None
    error: str = ""


@dataclass
class RegularityReport:
    omega_plus: np.ndarray
    omega_minus: np.ndarray
    free_boundary: np.ndarray
    predicted: PredictedExponent
    alpha0: float
    probes: list = field(default_factory=list)

    def rows(self):
        out = [["x0", "radii", "slope", "alpha_hat", "residual", "smooth", "reported", "note"]]
        for p in self.probes:
            x = " ".join(fmt(c) for c in p.x0)
            if p.fit is None:
                out.append([x, "0", "nan", "nan", "nan", "0", "0", p.error])
                continue
            f = p.fit
            note = "capped" if f.capped else ""
            out.append([x, str(len(f.radii)), fmt(f.slope), fmt(f.alpha_hat), fmt(f.residual),
                        str(int(f.smooth)), str(int(f.reported)), note])
        return out

    def summary(self):
        vals = [p.fit.alpha_hat for p in self.probes
                if p.fit is not None and p.fit.reported and not p.fit.smooth]
        lines = [f"predicted alpha* = {fmt(self.predicted.alpha)} ({self.predicted.annotation}), "
                 f"alpha0 = {fmt(self.alpha0)}",
                 f"free boundary nodes: {len(self.free_boundary)}",
                 f"probes: {len(self.probes)}, reported: {len(vals)}, "
                 f"smooth: {sum(1 for p in self.probes if p.fit is not None and p.fit.smooth)}"]
        if vals:
            lines.append(f"alpha_hat min/median/max: {fmt(min(vals))} {fmt(float(np.median(vals)))} "
                         f"{fmt(max(vals))}")
        return "\n".join(lines)


def analyze_regularity(u: GridFunction, theta2, alpha0=1.0, probes=None, rho=0.5, n_scales=4,
                       sign_tol=0.0, r0=None):
    """Probe the given points (default: free-boundary nodes and the centre)."""
    plus, minus, fb = extract_free_boundary(u, sign_tol)
    dom = u.domain
    if probes is None:
        pts = [tuple(dom.coords[i]) for i in fb] + [tuple(np.zeros(dom.dim))]
        probes = list(dict.fromkeys(pts))
    rep = RegularityReport(plus, minus, fb, predicted_exponent(theta2, alpha0), alpha0)
    for x0 in probes:
        try:
            fit = estimate_gradient_holder(u, x0, rho, n_scales, r0)
            rep.probes.append(ProbeRecord(tuple(float(c) for c in np.atleast_1d(x0)), fit))
        except ResolutionError as exc:
            rep.probes.append(ProbeRecord(tuple(float(c) for c in np.atleast_1d(x0)), None, str(exc)))
    return rep
