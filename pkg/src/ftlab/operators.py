"""(lambda, Lambda)-elliptic operators in the decreasing sign convention.

``F`` decreases when curvature increases: ``lam*|N| <= F(M) - F(M+N) <=
Lam*|N|`` for ``N >= 0``, so the model operator is ``-trace``.  Every kind has
an exact matrix form and a monotone wide-stencil discrete form built from
directional second differences along orthogonal lattice frames.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, EllipticityError, StencilError
from .grid import Domain, GridFunction, axis_frame, default_frames


class OperatorKind(str, enum.Enum):
    NEGATIVE_TRACE = "negative_trace"
    PUCCI_PLUS = "pucci_plus"
    PUCCI_MINUS = "pucci_minus"
    CONVEX_COMBINATION = "convex_combination"


def sym_eigenvalues(M):
    """Eigenvalues of a symmetric matrix; closed form for d <= 2."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape == (1, 1):
        return np.array([M[0, 0]])
    if M.shape == (2, 2):
        a, b, c = M[0, 0], 0.5 * (M[0, 1] + M[1, 0]), M[1, 1]
        mean = 0.5 * (a + c)
        rad = math.hypot(0.5 * (a - c), b)
        return np.array([mean - rad, mean + rad])
    return np.linalg.eigvalsh(0.5 * (M + M.T))


def pucci_plus(M, lam, Lam):
    e = sym_eigenvalues(M)
    return float(-Lam * e[e < 0].sum() - lam * e[e > 0].sum())


def pucci_minus(M, lam, Lam):
    e = sym_eigenvalues(M)
    return float(-Lam * e[e > 0].sum() - lam * e[e < 0].sum())


def _check_frames(frames):
    for fr in frames:
        vecs = [np.asarray(e, dtype=float) for e in fr]
        for i in range(len(vecs)):
            for j in range(i + 1, len(vecs)):
                if abs(vecs[i] @ vecs[j]) > 1e-12:
                    raise ConfigurationError(f"frame {fr} is not orthogonal", "operator.frames")


@dataclass(frozen=True)
class EllipticOperatorSpec:
    kind: OperatorKind
    lam: float = 1.0
    Lam: float = 1.0
    frames: tuple | None = None
    weight: float = 0.5  # share of -trace in convex_combination

    def __post_init__(self):
        object.__setattr__(self, "kind", OperatorKind(self.kind))
        if not (0 < self.lam <= self.Lam):
            raise ConfigurationError(
                f"need 0 < lambda <= Lambda, got ({self.lam}, {self.Lam})", "operator.lambda"
            )
        if self.frames is not None:
            frames = tuple(tuple(tuple(int(c) for c in e) for e in fr) for fr in self.frames)
            if not frames:
                raise ConfigurationError("stencil frames must be nonempty", "operator.frames")
            _check_frames(frames)
            object.__setattr__(self, "frames", frames)
        if self.kind is OperatorKind.CONVEX_COMBINATION and not 0 <= self.weight <= 1:
            raise ConfigurationError("weight must lie in [0, 1]", "operator.weight")

    def spectral_band(self, dim):
        """Constants ``(a, b)`` with ``a|N| <= F(M) - F(M+N) <= b|N|`` in the spectral norm.

        For ``negative_trace`` these are the declared ``(lam, Lam)``.  The
        Pucci parameters bound the drop by multiples of ``trace(N)``, which
        lies between ``|N|`` and ``d|N|``, hence ``(lam, d*Lam)`` for them.
        """
        k = self.kind
        if k is OperatorKind.NEGATIVE_TRACE:
            return self.lam, self.Lam
        if k is OperatorKind.CONVEX_COMBINATION:
            w = self.weight
            return w + (1 - w) * self.lam, dim * (w + (1 - w) * self.Lam)
        return self.lam, dim * self.Lam

    def frames_for(self, dim):
        return self.frames if self.frames is not None else default_frames(dim)

    # -- exact form ----------------------------------------------------------

    def apply_exact(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        k = self.kind
        if k is OperatorKind.NEGATIVE_TRACE:
            return float(-np.trace(M))
        if k is OperatorKind.PUCCI_PLUS:
            return pucci_plus(M, self.lam, self.Lam)
        if k is OperatorKind.PUCCI_MINUS:
            return pucci_minus(M, self.lam, self.Lam)
        w = self.weight
        return float(w * -np.trace(M) + (1 - w) * pucci_minus(M, self.lam, self.Lam))

    def __call__(self, M):
        return self.apply_exact(M)

    # -- discrete form ---------------------------------------------------------

    def linearize(self, domain: Domain, values):
        """Discrete ``F_h`` at all interior nodes and its stencil coefficients.

        Returns ``(F, coeff)`` where ``coeff[:, j]`` is dF_h/d(delta_e) for the
        j-th entry of ``domain.directions``; ``F = sum_j coeff_j * delta_j``.
        All coefficients are <= 0, which is what makes the scheme monotone.
        """
        dirs = domain.directions
        col = {e: j for j, e in enumerate(dirs)}
        n = len(domain.interior)
        delta = {}

        def second(e):
            if e not in delta:
                if e not in col:
                    raise StencilError(f"direction {e} is not part of the domain's stencil")
                plus = domain.interior_neighbor(e)
                minus = domain.interior_neighbor(tuple(-c for c in e))
                c = values[domain.interior]
                delta[e] = (values[plus] - 2.0 * c + values[minus]) / (
                    domain.h ** 2 * sum(x * x for x in e))
            return delta[e]

        def negative_trace():
            coeff = np.zeros((n, len(dirs)))
            F = np.zeros(n)
            for e in axis_frame(domain.dim):
                F -= second(e)
                coeff[:, col[e]] = -1.0
            return F, coeff

        def extremal(plus):
            # frame value: sum over its directions of -a*max(d,0) - b*min(d,0)
            a, b = (self.lam, self.Lam) if plus else (self.Lam, self.lam)
            frames = self.frames_for(domain.dim)
            vals, coefs = [], []
            for fr in frames:
                v = np.zeros(n)
                c = np.zeros((n, len(dirs)))
                for e in fr:
                    d = second(e)
                    ce = np.where(d > 0, -a, -b)
                    v += ce * d
                    c[:, col[e]] = ce
                vals.append(v)
                coefs.append(c)
            vals = np.stack(vals)
            pick = vals.argmax(axis=0) if plus else vals.argmin(axis=0)
            F = vals[pick, np.arange(n)]
            coeff = np.stack(coefs)[pick, np.arange(n)]
            return F, coeff

        k = self.kind
        if k is OperatorKind.NEGATIVE_TRACE:
            return negative_trace()
        if k is OperatorKind.PUCCI_PLUS:
            return extremal(True)
        if k is OperatorKind.PUCCI_MINUS:
            return extremal(False)
        F1, c1 = negative_trace()
        F2, c2 = extremal(False)
        w = self.weight
        return w * F1 + (1 - w) * F2, w * c1 + (1 - w) * c2

    def value_from_deltas(self, deltas, dim):
        """Scalar ``F_h`` from a mapping direction -> second difference."""

        def extremal(plus):
            a, b = (self.lam, self.Lam) if plus else (self.Lam, self.lam)
            vals = [sum(-a * max(deltas[e], 0.0) - b * min(deltas[e], 0.0) for e in fr)
                    for fr in self.frames_for(dim)]
            return max(vals) if plus else min(vals)

        k = self.kind
        if k is OperatorKind.NEGATIVE_TRACE:
            return -sum(deltas[e] for e in axis_frame(dim))
        if k is OperatorKind.PUCCI_PLUS:
            return extremal(True)
        if k is OperatorKind.PUCCI_MINUS:
            return extremal(False)
        w = self.weight
        return w * -sum(deltas[e] for e in axis_frame(dim)) + (1 - w) * extremal(False)

    def stencil_directions(self, dim):
        """Directions the discrete form reads (axis frame included for -trace)."""
        dirs = []
        if self.kind in (OperatorKind.NEGATIVE_TRACE, OperatorKind.CONVEX_COMBINATION):
            dirs.extend(axis_frame(dim))
        if self.kind is not OperatorKind.NEGATIVE_TRACE:
            dirs.extend(e for fr in self.frames_for(dim) for e in fr)
        return tuple(dict.fromkeys(dirs))

    def discrete_all(self, domain: Domain, values):
        return self.linearize(domain, values)[0]

    def apply_discrete(self, u: GridFunction, node, h=None):
        """``F_h(u)`` at a single interior node."""
        dom = u.domain
        if not dom.is_interior[node]:
            raise StencilError(f"node {node} is not interior")
        if h is not None and abs(h - dom.h) > 1e-15:
            raise ConfigurationError("h must match the domain spacing")
        pos = np.searchsorted(dom.interior, node)
        return float(self.discrete_all(dom, u.values)[pos])


def negative_trace(**kw):
    return EllipticOperatorSpec(OperatorKind.NEGATIVE_TRACE, **kw)


@dataclass(frozen=True)
class ScaledOperator:
    """``Fbar(M) = factor * F(M / factor)``, the operator seen after rescaling.

    With ``factor = r^2/K`` this is ``(r^2/K) F((K/r^2) M)``.
    """

    base: EllipticOperatorSpec
    factor: float

    @property
    def lam(self):
        return self.base.lam

    @property
    def Lam(self):
        return self.base.Lam

    def spectral_band(self, dim):
        return self.base.spectral_band(dim)

    def apply_exact(self, M):
        return self.factor * self.base.apply_exact(np.asarray(M, dtype=float) / self.factor)

    def __call__(self, M):
        return self.apply_exact(M)


@dataclass
class EllipticityReport:
    samples: int
    dim: int
    lam: float
    Lam: float
    worst_lower_margin: float  # min of F(M)-F(M+N) - lam*|N|
    worst_upper_margin: float  # min of Lam*|N| - (F(M)-F(M+N))
    passed: bool
    witness: dict | None = field(default=None)


def check_uniform_ellipticity(op, sample_count, seed=0, dim=2, scale=1.0):
    """Sample (M, N >= 0) pairs and test the ellipticity band.

    ``N`` is the square of a random symmetric matrix and ``|N|`` its largest
    eigenvalue.  The band is ``op.spectral_band(dim)``: the declared
    constants for ``negative_trace``, ``(lam, d*Lam)`` for Pucci kinds.
    Raises :class:`EllipticityError` with the first violating pair;
    otherwise returns the worst margins.
    """
    if sample_count < 1:
        raise ConfigurationError("sample_count must be >= 1")
    lam, Lam = op.spectral_band(dim) if hasattr(op, "spectral_band") else (op.lam, op.Lam)
    rng = np.random.default_rng(seed)
    lo_worst, hi_worst = math.inf, math.inf
    witness = None
    for _ in range(sample_count):
        M = rng.normal(scale=scale, size=(dim, dim))
        M = 0.5 * (M + M.T)
        A = rng.normal(scale=scale, size=(dim, dim))
        A = 0.5 * (A + A.T)
        N = A @ A
        norm = float(sym_eigenvalues(N).max())
        drop = op.apply_exact(M) - op.apply_exact(M + N)
        slack = 1e-11 * (1.0 + np.abs(M).max() + np.abs(N).max()) * max(1.0, Lam)
        lo = drop - lam * norm
        hi = Lam * norm - drop
        lo_worst, hi_worst = min(lo_worst, lo), min(hi_worst, hi)
        if witness is None and (lo < -slack or hi < -slack):
            witness = {"M": M, "N": N, "drop": drop, "norm": norm}
    report = EllipticityReport(sample_count, dim, lam, Lam, lo_worst, hi_worst,
                               witness is None, witness)
    if witness is not None:
        raise EllipticityError(
            f"ellipticity band violated: F(M)-F(M+N)={witness['drop']:.6g}, "
            f"|N|={witness['norm']:.6g}, band ({lam}, {Lam})",
            witness=witness, report=report)
    return report
