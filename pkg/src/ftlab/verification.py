"""Viscosity-inequality checks, comparison harness and closed-form oracles.

The touching tests realize "u - phi has a local maximum at x0" on the grid:
the node value of ``u - phi`` must be strictly larger than at every stencil
neighbour.  Test functions are quadratics, so ``D phi`` and ``D^2 phi`` are
exact and only the location of the extremum carries discretization error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .degeneracy import ExponentField
from .errors import ComparisonViolation, ConfigurationError
from .grid import Domain, GridFunction, Shape, fmt
from .operators import EllipticOperatorSpec, OperatorKind, negative_trace
from .solver import DEFAULT_GRADIENT, SolveConfig, gradient_norm, solve_regularized


# --- oracles ------------------------------------------------------------------

@dataclass(frozen=True)
class OnePhaseOracle:
    """``u = |x|^(1+alpha)`` solving ``|Du|^theta (-Delta u) = f`` with constant ``f``."""

    theta: float
    dim: int
    alpha: float
    f_value: float

    def u(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.linalg.norm(x, axis=1) ** (1.0 + self.alpha)

    def f(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.full(len(x), self.f_value)

    def sample(self, domain: Domain):
        return domain.sample(self.u), domain.sample(self.f)

    @property
    def formula(self):
        return (f"u(x) = |x|^{fmt(1 + self.alpha)}, "
                f"f = -(1+a)^(1+theta)*(a+d-1) = {fmt(self.f_value)}")


def oracle_one_phase(theta, dim=1):
    if not theta > 0:
        raise ConfigurationError("the degeneracy rate must be positive", "oracle.theta")
    if dim not in (1, 2):
        raise ConfigurationError("oracles exist for d = 1, 2", "oracle.dim")
    a = 1.0 / (1.0 + theta)
    return OnePhaseOracle(float(theta), dim, a, -(1.0 + a) ** (1.0 + theta) * (a + dim - 1.0))


def _smooth_step(t):
    """C-infinity step: 0 for t <= -1, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    a = np.where(t + 1 > 0, np.exp(-1.0 / np.maximum(t + 1, 1e-300)), 0.0)
    b = np.where(1 - t > 0, np.exp(-1.0 / np.maximum(1 - t, 1e-300)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class TwoPhaseOracle:
    """``x^(1+a1)`` on ``x >= 0`` and ``-|x|^(1+a2)`` on ``x < 0`` (d = 1).

    ``f`` is ``f_plus`` on ``x > 0``, ``f_minus`` on ``x < 0`` and their mean
    at ``x = 0``.  With ``width > 0`` the jump is replaced by a smooth step of
    that half-width, which gives continuous data for the existence pipeline.
    """

    theta1: float
    theta2: float
    alpha1: float
    alpha2: float
    f_plus: float
    f_minus: float
    width: float = 0.0

    def u(self, x):
        x = np.asarray(x, dtype=float).reshape(len(np.atleast_1d(x)), -1)[:, 0]
        return np.where(x >= 0, np.abs(x) ** (1 + self.alpha1), -np.abs(x) ** (1 + self.alpha2))

    def f(self, x):
        x = np.asarray(x, dtype=float).reshape(len(np.atleast_1d(x)), -1)[:, 0]
        if self.width > 0:
            return self.f_minus + (self.f_plus - self.f_minus) * _smooth_step(x / self.width)
        mid = 0.5 * (self.f_plus + self.f_minus)
        return np.where(x > 0, self.f_plus, np.where(x < 0, self.f_minus, mid))

    def du(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, (1 + self.alpha1) * np.abs(x) ** self.alpha1,
                        (1 + self.alpha2) * np.abs(x) ** self.alpha2)

    def sample(self, domain: Domain):
        if domain.dim != 1:
            raise ConfigurationError("the two-phase oracle is one-dimensional", "domain.dim")
        return domain.sample(self.u), domain.sample(self.f)

    @property
    def C0(self):
        return max(abs(self.f_plus), abs(self.f_minus))

    @property
    def formula(self):
        return (f"u(x) = x^{fmt(1 + self.alpha1)} (x >= 0), -|x|^{fmt(1 + self.alpha2)} (x < 0); "
                f"f = {fmt(self.f_plus)} (x > 0), {fmt(self.f_minus)} (x < 0)")


def oracle_two_phase(theta1, theta2, width=0.0):
    if not 0 < theta1 < theta2:
        raise ConfigurationError(
            f"need 0 < theta1 < theta2, got ({theta1}, {theta2})", "oracle.theta")
    if width < 0:
        raise ConfigurationError("width must be >= 0", "oracle.width")
    a1, a2 = 1.0 / (1 + theta1), 1.0 / (1 + theta2)
    return TwoPhaseOracle(float(theta1), float(theta2), a1, a2,
                          -(1 + a1) ** (1 + theta1) * a1, (1 + a2) ** (1 + theta2) * a2, width)


def oracle_two_phase_mollified(theta1, theta2, width):
    if not width > 0:
        raise ConfigurationError("the mollified variant needs width > 0", "oracle.width")
    return oracle_two_phase(theta1, theta2, width)


# --- touching tests -------------------------------------------------------------

@dataclass
class TouchingTestConfig:
    sample_count: int = 500
    seed: int = 0
    gradient_range: float = 2.0
    hessian_range: float = 4.0
    tol_touch: float | None = None  # default c1 * h^(1/2)
    c1: float = 1.0

    def __post_init__(self):
        if int(self.sample_count) < 1:
            raise ConfigurationError("must be a positive integer", "verification.sample_count")
        if not (self.gradient_range > 0 and self.hessian_range > 0):
            raise ConfigurationError("ranges must be positive", "verification.hessian_range")
        if self.tol_touch is not None and not self.tol_touch > 0:
            raise ConfigurationError("must be positive", "verification.tol_touch")
        if not self.c1 > 0:
            raise ConfigurationError("must be positive", "verification.c1")

    def tolerance(self, h):
        return self.tol_touch if self.tol_touch is not None else self.c1 * math.sqrt(h)


@dataclass
class TouchRecord:
    sample: int
    p: tuple
    M: tuple
    centre: tuple
    node: int
    x: tuple
    value: float  # the evaluated min/max expression
    margin: float  # >= 0 passes
    passed: bool


@dataclass
class TouchingTestReport:
    kind: str
    C0: float
    tol: float
    samples: int
    records: list = field(default_factory=list)

    @property
    def evaluations(self):
        return len(self.records)

    @property
    def failures(self):
        return [r for r in self.records if not r.passed]

    @property
    def pass_rate(self):
        return 1.0 if not self.records else 1.0 - len(self.failures) / len(self.records)

    @property
    def worst_margin(self):
        return min((r.margin for r in self.records), default=math.inf)

    @property
    def passed(self):
        return not self.failures

    def summary(self):
        return (f"{self.kind}: {self.evaluations} touching evaluations over {self.samples} "
                f"quadratics, pass rate {self.pass_rate:.6f}, worst margin {self.worst_margin:.6g}")

    def rows(self):
        """CSV rows, one per evaluation."""
        head = ["sample", "node", "x", "p", "M", "centre", "value", "margin", "passed"]
        out = [head]
        for r in self.records:
            out.append([str(r.sample), str(r.node), " ".join(fmt(c) for c in r.x),
                        " ".join(fmt(c) for c in r.p), " ".join(fmt(c) for c in r.M),
                        " ".join(fmt(c) for c in r.centre), fmt(r.value), fmt(r.margin),
                        str(int(r.passed))])
        return out


def _exact_operator(op):
    return op if op is not None else negative_trace()


def _sample_quadratics(domain: Domain, cfg: TouchingTestConfig):
    rng = np.random.default_rng(cfg.seed)
    d, n = domain.dim, int(cfg.sample_count)
    lo = domain.coords.min(axis=0)
    hi = domain.coords.max(axis=0)
    centres = rng.uniform(lo, hi, size=(n, d))
    p = rng.uniform(-cfg.gradient_range, cfg.gradient_range, size=(n, d))
    if d == 1:
        M = rng.uniform(-cfg.hessian_range, cfg.hessian_range, size=(n, 1, 1))
    else:
        eig = rng.uniform(-cfg.hessian_range, cfg.hessian_range, size=(n, 2))
        ang = rng.uniform(0.0, math.pi, size=n)
        c, s = np.cos(ang), np.sin(ang)
        Q = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
        M = Q @ (eig[:, :, None] * np.swapaxes(Q, 1, 2))
    return centres, p, M


def _strict_extrema(domain: Domain, w, maximum=True):
    """Interior nodes where ``w`` is strictly above (below) every stencil neighbour."""
    I = domain.interior
    c = w[I]
    keep = np.ones(len(I), dtype=bool)
    for e in domain.directions:
        for sgn in (1, -1):
            nb = domain.interior_neighbor(tuple(sgn * x for x in e))
            keep &= (c > w[nb]) if maximum else (c < w[nb])
    return I[keep]


def _touch(u: GridFunction, C0, theta2, op, cfg, sub):
    if C0 < 0:
        raise ConfigurationError("C0 must be >= 0", "verification.C0")
    dom = u.domain
    op = _exact_operator(op)
    tol = cfg.tolerance(dom.h)
    centres, P, Ms = _sample_quadratics(dom, cfg)
    X = dom.coords
    report = TouchingTestReport("subsolution" if sub else "supersolution", float(C0), tol,
                                int(cfg.sample_count))
    for k in range(len(centres)):
        y = X - centres[k]
        phi = y @ P[k] + 0.5 * np.einsum("ni,ij,nj->n", y, Ms[k], y)
        nodes = _strict_extrema(dom, u.values - phi, maximum=sub)
        if not len(nodes):
            continue
        FM = op.apply_exact(Ms[k])
        grads = P[k] + (X[nodes] - centres[k]) @ Ms[k].T
        gnorm = np.linalg.norm(grads, axis=1)
        deg = gnorm ** theta2 * FM
        if sub:
            val = np.minimum(deg, FM)
            margin = C0 + tol - val
        else:
            val = np.maximum(deg, FM)
            margin = val + C0 + tol
        for node, v, m in zip(nodes, val, margin):
            report.records.append(TouchRecord(
                k, tuple(P[k]), tuple(Ms[k].ravel()), tuple(centres[k]), int(node),
                tuple(X[node]), float(v), float(m), bool(m >= 0)))
    return report


def touch_test_subsolution(u: GridFunction, C0, theta2, op=None, cfg=None):
    """At strict discrete maxima of ``u - phi``: ``min(|Dphi|^theta2 F, F) <= C0 + tol``."""
    return _touch(u, C0, theta2, op, cfg or TouchingTestConfig(), True)


def touch_test_supersolution(u: GridFunction, C0, theta2, op=None, cfg=None):
    """At strict discrete minima of ``u - phi``: ``max(|Dphi|^theta2 F, F) >= -C0 - tol``."""
    return _touch(u, C0, theta2, op, cfg or TouchingTestConfig(), False)


# --- large-gradient reduction ------------------------------------------------------

@dataclass
class PucciCheckReport:
    gamma: float
    C0: float
    tol: float
    nodes: np.ndarray  # interior nodes with |grad u| > gamma
    p_minus: np.ndarray
    p_plus: np.ndarray
    violations: list = field(default_factory=list)  # (node, x, side, value)

    @property
    def passed(self):
        return not self.violations

    def summary(self):
        state = "pass" if self.passed else f"{len(self.violations)} violations"
        return f"large-gradient Pucci check on {len(self.nodes)} nodes (gamma={self.gamma:g}): {state}"


def large_gradient_pucci_check(u: GridFunction, gamma, C0, lam, Lam, tol=None, frames=None,
                               gradient=DEFAULT_GRADIENT):
    """Where ``|grad_h u| > gamma`` require ``P-_h u <= C0 + tol`` and ``P+_h u >= -C0 - tol``."""
    if not gamma > 0:
        raise ConfigurationError("gamma must be positive", "verification.gamma")
    dom = u.domain
    tol = math.sqrt(dom.h) if tol is None else float(tol)
    pm = EllipticOperatorSpec(OperatorKind.PUCCI_MINUS, lam, Lam, frames).discrete_all(dom, u.values)
    pp = EllipticOperatorSpec(OperatorKind.PUCCI_PLUS, lam, Lam, frames).discrete_all(dom, u.values)
    sel = gradient_norm(dom, u.values, gradient) > gamma
    nodes = dom.interior[sel]
    rep = PucciCheckReport(float(gamma), float(C0), tol, nodes, pm[sel], pp[sel])
    for n, a, b in zip(nodes, pm[sel], pp[sel]):
        if a > C0 + tol:
            rep.violations.append((int(n), tuple(dom.coords[n]), "P-", float(a)))
        if b < -C0 - tol:
            rep.violations.append((int(n), tuple(dom.coords[n]), "P+", float(b)))
    return rep


# --- comparison harness --------------------------------------------------------------

@dataclass
class ComparisonReport:
    trials: int
    margins: list = field(default_factory=list)  # min of w - u over interior nodes, per trial

    @property
    def min_margin(self):
        return min(self.margins, default=math.inf)

    @property
    def violations(self):
        return sum(m < 0 for m in self.margins)


def random_smooth(domain: Domain, rng, modes=4, scale=2.0):
    """Random trigonometric field normalized to sup norm one."""
    k = rng.normal(scale=scale, size=(modes, domain.dim))
    ph = rng.uniform(0.0, 2 * math.pi, size=modes)
    a = rng.normal(size=modes)
    vals = (a[None, :] * np.sin(domain.coords @ k.T + ph[None, :])).sum(axis=1)
    top = float(np.abs(vals).max())
    return vals / top if top > 0 else vals


def random_theta(domain: Domain, params, rng):
    """Admissible exponent field with values in [theta1, theta2]."""
    s = 0.5 * (1.0 + random_smooth(domain, rng))
    return ExponentField(domain, params.theta1 + (params.theta2 - params.theta1) * s)


def comparison_harness(domain: Domain, op, params, eps, trials, seed=0, cfg=None,
                       delta_f=None, delta_g=None):
    """Solve ordered pairs and assert ``u <= w`` nodewise.

    Each trial draws smooth ``f``, ``g``, an exponent field and nonnegative
    perturbations; ``u`` solves with ``(f - df, g - dg)`` and ``w`` with
    ``(f + df, g)``.  The residual grows with ``u``, so ``u`` is the subsolution.  Fixed ``delta_f`` /
    ``delta_g`` values replace the random perturbations.
    """
    if int(trials) < 1:
        raise ConfigurationError("need at least one trial", "verification.trials")
    cfg = cfg or SolveConfig()
    rng = np.random.default_rng(seed)
    report = ComparisonReport(int(trials))
    for t in range(int(trials)):
        f = random_smooth(domain, rng) * rng.uniform(0.1, 1.0)
        g = random_smooth(domain, rng)
        theta = random_theta(domain, params, rng)
        if delta_f is None:
            df = np.abs(random_smooth(domain, rng)) * rng.uniform(0.0, 0.5)
        else:
            df = np.full(domain.n_nodes, float(delta_f))
        if delta_g is None:
            dg = np.abs(random_smooth(domain, rng)) * rng.uniform(0.0, 0.5)
        else:
            dg = np.full(domain.n_nodes, float(delta_g))
        u, _ = solve_regularized(None, eps, GridFunction(domain, f - df), GridFunction(domain, g - dg),
                                 op, cfg, theta=theta)
        w, _ = solve_regularized(None, eps, GridFunction(domain, f + df), GridFunction(domain, g),
                                 op, cfg, theta=theta)
        gap = w.values - u.values
        # boundary nodes carry the data exactly; the interior gap is the informative one
        report.margins.append(float(gap[domain.interior].min()))
        if gap.min() < 0:
            i = int(gap.argmin())
            m = float(gap[i])
            raise ComparisonViolation(
                f"trial {t}: u exceeds w by {-m:.3e} at x={domain.coords[i]}",
                witness={"trial": t, "node": i, "x": domain.coords[i], "u": u, "w": w,
                         "f": f, "df": df, "g": g, "dg": dg, "theta": theta})
    return report


def comparison_domain(dim):
    """The harness grids: 33 nodes on [-1, 1] or 17 x 17 on the square."""
    from .grid import DomainSpec, build_domain
    if dim == 1:
        return build_domain(DomainSpec(Shape.INTERVAL, 1, 1 / 16))
    return build_domain(DomainSpec(Shape.BOX, 2, 1 / 8))
