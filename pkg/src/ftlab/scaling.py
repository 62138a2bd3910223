"""Rescaling ``v(x) = u(r x) / K`` of a grid solution.

If ``|Du|^theta F(D^2 u)`` is bounded by ``C0`` then ``v`` satisfies the same
kind of inequality for the operator ``Fbar(M) = (r^2/K) F((K/r^2) M)`` with the
bound ``C0 * max(r^(2+theta2)/K^(1+theta2), r^2/K)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, StencilError
from .grid import DomainSpec, GridFunction, build_domain
from .operators import ScaledOperator


@dataclass(frozen=True)
class ScaledConstants:
    r: float
    K: float
    C0: float
    C0_bar: float
    theta2: float
    operator: ScaledOperator | None


def scaling_K(u_sup, C0, theta2):
    return u_sup + max(C0, C0 ** (1.0 / (1.0 + theta2)))


def scaled_bound(C0, r, K, theta2):
    return C0 * max(r ** (2.0 + theta2) / K ** (1.0 + theta2), r * r / K)


def _power_of_half(r):
    m = -math.log2(r)
    k = round(m)
    return k if k >= 0 and abs(m - k) < 1e-12 else None


def scale_problem(u: GridFunction, C0, r, theta2, K_override=None, op=None):
    """Rescaled grid function and constants.

    ``v`` lives on a domain of the same shape and extent with spacing
    ``h/r``, so every node ``x`` of ``v`` maps to the node ``r x`` of ``u``;
    ``r`` must therefore be a power of 1/2 with ``extent / (h/r)`` integral.
    """
    if not 0 < r <= 1:
        raise ConfigurationError("r must lie in (0, 1]", "scaling.r")
    if C0 < 0 or not theta2 > 0:
        raise ConfigurationError("need C0 >= 0 and theta2 > 0", "scaling.C0")
    if _power_of_half(r) is None:
        raise ConfigurationError(f"r = {r!r} is not a power of 1/2", "scaling.r")
    dom = u.domain
    u_sup = float(np.abs(u.values).max())
    K = scaling_K(u_sup, C0, theta2) if K_override is None else float(K_override)
    if not K > 0:
        raise ConfigurationError("K must be positive", "scaling.K")
    s = dom.spec
    try:
        target = build_domain(DomainSpec(s.shape, s.dim, s.h / r, s.extent, s.R), dom.frames)
    except ConfigurationError as exc:
        raise ConfigurationError(f"grid spacing h/r = {s.h / r:g} does not fit the domain: {exc}",
                                 "scaling.r") from exc
    src = dom._lookup(np.rint(target.coords * r / s.h).astype(np.int64))
    if (src < 0).any():
        raise StencilError("rescaled nodes fall outside the source grid")
    v = GridFunction(target, u.values[src] / K)
    scaled_op = ScaledOperator(op, r * r / K) if op is not None else None
    return v, ScaledConstants(float(r), K, float(C0), scaled_bound(C0, r, K, theta2),
                              float(theta2), scaled_op)
