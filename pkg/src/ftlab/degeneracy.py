"""Sign-dependent degeneracy exponent built from a trial function.

``v`` is clamped into a [0, 1] indicator of ``{v > 0}`` on the scale ``eps``,
smoothed by the standard bump mollifier of radius ``eps`` (zero outside the
domain), and the result blends ``theta1`` (positive phase) with ``theta2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal

from .errors import ConfigurationError, ResolutionError
from .grid import Domain, GridFunction

UNDETERMINED = -1.0


@dataclass(frozen=True)
class DegeneracyParams:
    """Degeneracy rates and regularization scale.

    ``allow_equal`` admits ``theta1 == theta2`` (single-phase sanity runs);
    the transmission problem proper needs ``0 < theta1 < theta2``.
    """

    theta1: float
    theta2: float
    epsilon: float = 0.5
    allow_equal: bool = False

    def __post_init__(self):
        if not self.theta1 > 0:
            raise ConfigurationError("need 0 < theta1 < theta2", "degeneracy.theta1")
        if self.theta1 > self.theta2 or (self.theta1 == self.theta2 and not self.allow_equal):
            raise ConfigurationError(
                f"need 0 < theta1 < theta2, got theta1={self.theta1}, theta2={self.theta2}",
                "degeneracy.theta2")
        if not 0 < self.epsilon < 1:
            raise ConfigurationError("epsilon must lie in (0, 1)", "degeneracy.epsilon")

    def with_epsilon(self, eps):
        return DegeneracyParams(self.theta1, self.theta2, eps, self.allow_equal)

    @property
    def midpoint(self):
        return 0.5 * (self.theta1 + self.theta2)


class ExponentField(GridFunction):
    """Nodal exponents; ``UNDETERMINED`` marks nodes where no phase applies."""

    @property
    def undetermined(self):
        return self.values == UNDETERMINED


def clamp_indicator(v: GridFunction, eps) -> GridFunction:
    if not 0 < eps < 1:
        raise ConfigurationError("epsilon must lie in (0, 1)")
    g = np.clip((v.values + eps) / (2.0 * eps), 0.0, 1.0)
    return GridFunction(v.domain, g)


@lru_cache(maxsize=64)
def _kernel(dim, h, eps):
    n = int(math.floor(eps / h))
    ax = np.arange(-n, n + 1)
    grids = np.meshgrid(*([ax] * dim), indexing="ij")
    r2 = sum(g.astype(float) ** 2 for g in grids) * (h / eps) ** 2
    w = np.zeros(r2.shape)
    inside = r2 < 1.0
    w[inside] = np.exp(1.0 / (r2[inside] - 1.0))
    w /= w.sum()
    w.setflags(write=False)
    return w


def mollifier_weights(domain: Domain, eps):
    """Lattice samples of the bump of radius ``eps``, normalized to sum 1."""
    if eps < domain.h * (1 - 1e-12):
        raise ResolutionError(f"mollification radius {eps} is below the grid spacing {domain.h}")
    return _kernel(domain.dim, float(domain.h), float(eps))


def mollify(g: GridFunction, eps, outside=0.0) -> GridFunction:
    """Discrete convolution of ``g`` with the bump mollifier of radius ``eps``.

    Lattice points that are not nodes of the domain contribute ``outside``
    (0 for the zero extension; other values only for synthetic checks).
    """
    dom = g.domain
    w = mollifier_weights(dom, eps)
    n = w.shape[0] // 2
    dense = np.full(dom._dense.shape, float(outside))
    dense = np.pad(dense, n, constant_values=float(outside))
    k = dom.lattice + dom.lim + n
    dense[tuple(k.T)] = g.values
    conv = signal.convolve(dense, w, mode="valid", method="direct")
    vals = conv[tuple((dom.lattice + dom.lim).T)]
    return GridFunction(dom, np.clip(vals, 0.0, 1.0))


def mollifier_lipschitz(domain: Domain, eps):
    """Lipschitz constant (Euclidean) of ``x -> (g * eta)(x)`` over ``0 <= g <= 1``.

    A lattice step ``h e_i`` changes the convolution by at most the l1 distance
    between the kernel and its shift; chaining axis steps costs ``sqrt(d)``.
    """
    w = mollifier_weights(domain, eps)
    best = 0.0
    for axis in range(domain.dim):
        pad = [(0, 0)] * domain.dim
        pad[axis] = (1, 1)
        wp = np.pad(w, pad)
        sl_a = [slice(None)] * domain.dim
        sl_b = [slice(None)] * domain.dim
        sl_a[axis] = slice(1, None)
        sl_b[axis] = slice(None, -1)
        best = max(best, float(np.abs(wp[tuple(sl_a)] - wp[tuple(sl_b)]).sum()))
    return math.sqrt(domain.dim) * best / domain.h


def theta_field(v: GridFunction, params: DegeneracyParams) -> ExponentField:
    hv = mollify(clamp_indicator(v, params.epsilon), params.epsilon).values
    theta = params.theta1 * hv + (1.0 - hv) * params.theta2
    # guard the invariant against rounding in the blend
    theta = np.clip(theta, params.theta1, params.theta2)
    return ExponentField(v.domain, theta)


def constant_theta(domain: Domain, value) -> ExponentField:
    return ExponentField(domain, np.full(domain.n_nodes, float(value)))


def limit_exponent(u: GridFunction, params: DegeneracyParams, sign_tol=0.0) -> ExponentField:
    """``theta1`` on ``{u > tol}``, ``theta2`` on ``{u < -tol}``, else UNDETERMINED."""
    if sign_tol < 0:
        raise ConfigurationError("sign_tol must be >= 0")
    out = np.full(u.domain.n_nodes, UNDETERMINED)
    out[u.values > sign_tol] = params.theta1
    out[u.values < -sign_tol] = params.theta2
    return ExponentField(u.domain, out)
