"""Lattice domains, grid functions and the basic finite differences.

Nodes are the lattice points ``h * k`` (``k`` an integer vector) that belong
to the discretized domain.  They are stored in lexicographic order of ``k``
with the last coordinate varying fastest; every sweep in the package relies on
this order being fixed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, StencilError

AXIS_FRAME_1D = (((1,),),)
DEFAULT_FRAMES_2D = (((1, 0), (0, 1)), ((1, 1), (1, -1)))


class Shape(str, enum.Enum):
    INTERVAL = "interval"
    BOX = "box"
    BALL = "ball"


def default_frames(dim):
    """Axis frame, plus the pi/4-rotated frame in 2D."""
    if dim == 1:
        return AXIS_FRAME_1D
    return DEFAULT_FRAMES_2D


def axis_frame(dim):
    return tuple(tuple(int(i == j) for j in range(dim)) for i in range(dim))


def _lattice_multiple(value, h):
    n = value / h
    k = round(n)
    if k < 1 or abs(n - k) > 1e-9 * max(1.0, abs(n)):
        return None
    return k


@dataclass(frozen=True)
class DomainSpec:
    """Discretization parameters of a domain centred at the origin.

    ``extent`` is the half-width of an interval/box or the radius of a ball;
    ``R`` is the exterior sphere radius used by the barrier construction.
    """

    shape: Shape
    dim: int
    h: float
    extent: float = 1.0
    R: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "shape", Shape(self.shape))
        if self.dim not in (1, 2):
            raise ConfigurationError("only d = 1 and d = 2 are supported", "domain.dim")
        if self.shape is Shape.INTERVAL and self.dim != 1:
            raise ConfigurationError("an interval is one-dimensional", "domain.dim")
        if not self.h > 0:
            raise ConfigurationError("h must be positive", "domain.h")
        if not self.extent > 0:
            raise ConfigurationError("extent must be positive", "domain.extent")
        if not self.R > 0:
            raise ConfigurationError("R must be positive", "domain.R")
        if _lattice_multiple(self.extent, self.h) is None:
            raise ConfigurationError(
                f"extent/h = {self.extent / self.h!r} is not a positive integer", "domain.h"
            )

    @property
    def n_cells(self):
        return _lattice_multiple(self.extent, self.h)


class Domain:
    """Node set of a :class:`DomainSpec` with interior/boundary classification.

    A node is interior when it lies strictly inside the continuous domain and
    every stencil neighbour ``x +- h e`` (``e`` from ``frames``) is a node.
    """

    def __init__(self, spec: DomainSpec, frames=None):
        self.spec = spec
        self.frames = tuple(tuple(tuple(int(c) for c in e) for e in fr) for fr in (frames or default_frames(spec.dim)))
        for fr in self.frames:
            for e in fr:
                if len(e) != spec.dim or not any(e):
                    raise ConfigurationError(f"bad stencil direction {e}", "operator.frames")
        self.directions = tuple(dict.fromkeys(e for fr in self.frames for e in fr))
        self._build()

    @property
    def dim(self):
        return self.spec.dim

    @property
    def h(self):
        return self.spec.h

    def _build(self):
        spec = self.spec
        n = spec.n_cells
        reach = max(max(abs(c) for c in e) for e in self.directions)
        if spec.shape is Shape.BALL:
            lim = n + reach
        else:
            lim = n
        axes = [np.arange(-lim, lim + 1)] * spec.dim
        idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, spec.dim)
        offsets = np.array([e for e in self.directions] + [tuple(-c for c in e) for e in self.directions])

        if spec.shape is Shape.BALL:
            r2 = (idx.astype(float) ** 2).sum(axis=1)
            inside = r2 < n * n - 1e-9
            side = 2 * lim + 1
            inside_dense = np.zeros((side,) * spec.dim, dtype=bool)
            inside_dense[tuple((idx[inside] + lim).T)] = True
            keep = inside.copy()
            for o in offsets:
                k = idx + o + lim
                ok = ((k >= 0) & (k < side)).all(axis=1)
                hit = np.zeros(len(idx), dtype=bool)
                hit[ok] = inside_dense[tuple(k[ok].T)]
                keep |= hit
            idx = idx[keep]
            strictly_inside = inside[keep]
        else:
            strictly_inside = (np.abs(idx) < n).all(axis=1)

        self.lattice = idx
        self.lim = lim
        dense = -np.ones((2 * lim + 1,) * spec.dim, dtype=np.int64)
        dense[tuple((idx + lim).T)] = np.arange(len(idx))
        self._dense = dense

        is_interior = strictly_inside.copy()
        for o in offsets:
            nb = self._lookup(idx + o)
            is_interior &= nb >= 0
        self.interior = np.flatnonzero(is_interior)
        self.boundary = np.flatnonzero(~is_interior)
        self.is_interior = is_interior

    def _lookup(self, k):
        k = np.asarray(k)
        shifted = k + self.lim
        ok = ((shifted >= 0) & (shifted < self._dense.shape[0])).all(axis=-1)
        out = -np.ones(k.shape[:-1], dtype=np.int64)
        out[ok] = self._dense[tuple(shifted[ok].T)]
        return out

    @property
    def n_nodes(self):
        return len(self.lattice)

    @cached_property
    def coords(self):
        return self.lattice.astype(float) * self.h

    @cached_property
    def diameter(self):
        pts = self.coords[self.boundary]
        if self.dim == 1:
            return float(pts.max() - pts.min())
        d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
        return float(math.sqrt(d2.max()))

    def node_at(self, x):
        """Index of the node at coordinate ``x`` (must be a lattice point)."""
        k = np.rint(np.asarray(x, dtype=float) / self.h).astype(np.int64)
        if not np.allclose(k * self.h, x, atol=1e-9 * max(1.0, self.spec.extent)):
            raise StencilError(f"{x!r} is not a lattice point")
        i = int(self._lookup(k.reshape(1, -1))[0])
        if i < 0:
            raise StencilError(f"{x!r} is not a node of the domain")
        return i

    def neighbor(self, nodes, e):
        """Indices of ``nodes + e`` (``-1`` where the lattice point is absent)."""
        nodes = np.atleast_1d(np.asarray(nodes, dtype=np.int64))
        return self._lookup(self.lattice[nodes] + np.asarray(e, dtype=np.int64))

    def interior_neighbor(self, e):
        """Neighbour table of every interior node in direction ``e``."""
        key = tuple(int(c) for c in e)
        cache = self.__dict__.setdefault("_nb_cache", {})
        if key not in cache:
            nb = self.neighbor(self.interior, key)
            if (nb < 0).any():
                bad = self.coords[self.interior[nb < 0][0]]
                raise StencilError(f"direction {key} leaves the node set at x={bad}")
            cache[key] = nb
        return cache[key]

    def stencil_neighbors(self, nodes):
        """Array ``(len(nodes), 2*len(directions))`` of all stencil neighbours."""
        cols = []
        for e in self.directions:
            cols.append(self.neighbor(nodes, e))
            cols.append(self.neighbor(nodes, tuple(-c for c in e)))
        return np.stack(cols, axis=1)

    def sample(self, func):
        """Grid function with values ``func(coords)`` (coords shaped (N, d))."""
        vals = np.asarray(func(self.coords), dtype=float)
        if vals.ndim == 0:
            vals = np.full(self.n_nodes, float(vals))
        return GridFunction(self, vals)

    def zeros(self):
        return GridFunction(self, np.zeros(self.n_nodes))

    def __repr__(self):
        s = self.spec
        return (f"Domain({s.shape.value}, d={s.dim}, h={s.h}, nodes={self.n_nodes}, "
                f"interior={len(self.interior)}, boundary={len(self.boundary)})")


def build_domain(spec: DomainSpec, frames=None) -> Domain:
    return Domain(spec, frames)


@dataclass
class GridFunction:
    domain: Domain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.domain.n_nodes,):
            raise ValueError(
                f"expected {self.domain.n_nodes} values, got shape {self.values.shape}"
            )
        if not np.isfinite(self.values).all():
            raise ValueError("grid function values must be finite")

    def copy(self):
        return GridFunction(self.domain, self.values.copy())

    def with_values(self, values):
        return GridFunction(self.domain, values)

    def sup_norm(self, nodes=None):
        v = self.values if nodes is None else self.values[nodes]
        return float(np.abs(v).max()) if v.size else 0.0

    def __neg__(self):
        return GridFunction(self.domain, -self.values)


def _check_interior(domain, node):
    if not domain.is_interior[node]:
        raise StencilError(f"node {node} at x={domain.coords[node]} is not interior")


def second_difference(u: GridFunction, node, e, h=None):
    """``(u(x+he) - 2u(x) + u(x-he)) / (h^2 |e|^2)`` at one node."""
    dom = u.domain
    h = dom.h if h is None else h
    e = tuple(int(c) for c in e)
    plus = int(dom.neighbor(node, e)[0])
    minus = int(dom.neighbor(node, tuple(-c for c in e))[0])
    if plus < 0 or minus < 0:
        raise StencilError(f"direction {e} leaves the node set at node {node}")
    v = u.values
    return (v[plus] - 2.0 * v[node] + v[minus]) / (h * h * sum(c * c for c in e))


def gradient_central(u: GridFunction, node, h=None):
    """Componentwise central differences at one interior node."""
    dom = u.domain
    _check_interior(dom, node)
    h = dom.h if h is None else h
    out = np.empty(dom.dim)
    for i, e in enumerate(axis_frame(dom.dim)):
        plus = int(dom.neighbor(node, e)[0])
        minus = int(dom.neighbor(node, tuple(-c for c in e))[0])
        out[i] = (u.values[plus] - u.values[minus]) / (2.0 * h)
    return out


def second_differences_interior(domain: Domain, values, e):
    """Vectorized :func:`second_difference` over all interior nodes."""
    e = tuple(int(c) for c in e)
    plus = domain.interior_neighbor(e)
    minus = domain.interior_neighbor(tuple(-c for c in e))
    c = values[domain.interior]
    return (values[plus] - 2.0 * c + values[minus]) / (domain.h ** 2 * sum(x * x for x in e))


def gradients_interior(domain: Domain, values):
    """Central-difference gradients at every interior node, shape (n_int, d)."""
    cols = []
    for e in axis_frame(domain.dim):
        plus = domain.interior_neighbor(e)
        minus = domain.interior_neighbor(tuple(-c for c in e))
        cols.append((values[plus] - values[minus]) / (2.0 * domain.h))
    return np.stack(cols, axis=1)


# --- serialization -------------------------------------------------------

def fmt(x):
    return format(float(x), ".17g")


def write_csv(u: GridFunction, path, column="value"):
    dom = u.domain
    header = ",".join([f"x{i + 1}" for i in range(dom.dim)] + [column])
    lines = [header]
    for x, v in zip(dom.coords, u.values):
        lines.append(",".join([fmt(c) for c in x] + [fmt(v)]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path, domain: Domain, column=None):
    """Load a grid-function CSV and align it with ``domain``'s nodes."""
    text = Path(path).read_text().strip().splitlines()
    header = [c.strip() for c in text[0].split(",")]
    d = domain.dim
    if len(header) != d + 1 or header[:d] != [f"x{i + 1}" for i in range(d)]:
        raise ConfigurationError(f"CSV header {header} does not match a {d}-D domain")
    if column is not None and header[d] != column:
        raise ConfigurationError(f"expected value column {column!r}, found {header[d]!r}")
    data = np.array([[float(c) for c in row.split(",")] for row in text[1:]])
    if data.shape[0] != domain.n_nodes:
        raise ConfigurationError(
            f"CSV has {data.shape[0]} rows but the domain has {domain.n_nodes} nodes"
        )
    ids = domain._lookup(np.rint(data[:, :d] / domain.h).astype(np.int64))
    if (ids < 0).any() or len(set(ids.tolist())) != domain.n_nodes:
        raise ConfigurationError("CSV node coordinates do not match the domain")
    values = np.empty(domain.n_nodes)
    values[ids] = data[:, d]
    return GridFunction(domain, values)


def write_pgm(u: GridFunction, path):
    """8-bit binary PGM heatmap of a 2D grid function plus a min/max sidecar.

    Pixels outside the node set are black; node values map linearly onto
    gray levels 0..255.  Rows run from the largest x2 down.
    """
    dom = u.domain
    if dom.dim != 2:
        raise ValueError("PGM output needs a 2D grid function")
    lo, hi = float(u.values.min()), float(u.values.max())
    span = hi - lo if hi > lo else 1.0
    size = 2 * dom.lim + 1
    img = np.zeros((size, size), dtype=np.uint8)
    gray = np.rint((u.values - lo) / span * 255.0).astype(np.uint8)
    k = dom.lattice + dom.lim
    img[size - 1 - k[:, 1], k[:, 0]] = gray
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{size} {size}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    path.with_suffix(".minmax.txt").write_text(f"min={fmt(lo)}\nmax={fmt(hi)}\n")
