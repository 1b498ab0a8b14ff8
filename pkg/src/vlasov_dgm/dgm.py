"""Catalog of digraph measures and their piecewise-constant atomic discretization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .measures import (
    DEFAULT_LP_CAP, Atomic, Cantor, DiscreteMeasure, Dirac, FiberFunction,
    GreatCircle, MeasureDescriptor, Segment, Uniform, Zero, bl_distance,
    empirical_approximation,
)
from .vertex import Partition, VertexSpace, quadrature, vertex_space


@dataclass(frozen=True)
class DigraphMeasure:
    """x -> eta_x, a finite measure on the vertex space itself."""

    name: str
    space: VertexSpace
    fiber: Callable[[np.ndarray], MeasureDescriptor]

    def __call__(self, x) -> MeasureDescriptor:
        return self.fiber(np.atleast_1d(np.asarray(x, dtype=float)))

    def mass(self, x) -> float:
        return float(self(x).mass)


def _wrap(v):
    return float(v % 1.0)


def _ring(x):
    return Dirac((_wrap(x[0]),), 2.0)


def _binary_tree(x):
    t = float(x[0])
    if t <= 0.0:
        return Dirac((0.0,), 2.0)
    if t <= 0.5:
        return Atomic(((2 * t,), (t / 2,)), (2.0, 1.0))
    return Dirac((t / 2,), 1.0)


def _star(x):
    # the limit leaves x = 0 undefined; it is completed by the zero measure
    return Zero(1) if float(x[0]) <= 0.0 else Dirac((0.0,), 1.0)


def _circle_graphop(x):
    t = float(x[0])
    return Atomic(((_wrap(t + 0.25),), (_wrap(t - 0.25),)), (1.0, 1.0))


def _spherical_graphop(x):
    return GreatCircle(tuple(x / np.linalg.norm(x)), 1.0)


def _tent(x):
    t = float(x[0])
    if 1 / 3 <= t <= 2 / 3:
        return Dirac((0.5,), 1.0)
    s = t if t < 1 / 3 else 1.0 - t
    return Uniform(1.5 * s, 1.0 - 1.5 * s, 1.0)


def _cantor(x):
    return Cantor(float(x[0]), 0.75, 1.0, 1.0)


def _triangle(x):
    norm = float(np.abs(x).sum())
    if norm == 0.0:
        return Zero(2)
    return Segment((0.0, 0.0), tuple(x / norm), norm)


def _discrete(x):
    t = float(x[0])
    if t <= 0.0:
        return Zero(1)
    i = int(round(1.0 / t))
    pts = tuple((1.0 / k,) for k in range(1, i + 1))
    return Atomic(pts, (t / i,) * i)


_CATALOG = {
    "ring": ("circle", _ring),
    "binary_tree": ("interval", _binary_tree),
    "star": ("interval", _star),
    "circle_graphop": ("circle", _circle_graphop),
    "spherical_graphop": ("sphere", _spherical_graphop),
    "tent": ("interval", _tent),
    "cantor": ("circle", _cantor),
    "triangle": ("triangle", _triangle),
    "discrete": ("discrete", _discrete),
}

CATALOG_NAMES = tuple(_CATALOG)


def catalog(name: str) -> DigraphMeasure:
    if name not in _CATALOG:
        raise KeyError(f"unknown DGM {name!r}; known: {', '.join(_CATALOG)}")
    kind, rule = _CATALOG[name]
    return DigraphMeasure(name, vertex_space(kind), rule)


@dataclass(frozen=True, eq=False)
class DiscretizedDGM:
    """eta^{m,n}: on cell i the measure (b_i/n) * sum_j delta_{y_ij}."""

    partition: Partition
    n: int
    weights: np.ndarray
    atoms: tuple  # per cell an (n, r1) array, or (0, r1) when b_i = 0
    name: str = ""

    def fiber(self, i: int) -> DiscreteMeasure:
        y = self.atoms[i]
        if len(y) == 0:
            return DiscreteMeasure.zero(y.shape[1])
        return DiscreteMeasure(y, np.full(len(y), self.weights[i] / len(y)))

    def fiber_function(self) -> FiberFunction:
        return FiberFunction(self.partition, [self.fiber(i) for i in range(len(self.partition))])

    def format(self, ell: int = 1) -> str:
        rows = [f"{len(self.partition)},{self.n},{ell}"]
        for i, (b, y) in enumerate(zip(self.weights, self.atoms)):
            vals = [b, *np.asarray(y).ravel()]
            rows.append(",".join([str(i)] + [format(float(v), ".17g") for v in vals]))
        return "\n".join(rows) + "\n"


def cell_average(mass: Callable[[np.ndarray], float], partition: Partition, i: int,
                 npts: int = 64) -> float:
    """Average of ``mass`` over cell i against mu_X; the value at the
    representative when the cell is mu_X-null."""
    mu = partition.masses[i]
    if mu > 0:
        pts, w = quadrature(partition.space, partition.cells[i], npts)
        vals = np.array([mass(p) for p in pts])
        return float(np.dot(w, vals) / w.sum())
    return float(mass(partition.representatives[i]))


def discretize_dgm(eta: DigraphMeasure, partition: Partition, n: int,
                   rule: str = "quantile") -> DiscretizedDGM:
    if n < 1:
        raise ValueError("n must be at least 1")
    if partition.space != eta.space:
        raise ValueError("DGM and partition live on different vertex spaces")
    weights, atoms = [], []
    r1 = partition.space.ambient_dim
    for i in range(len(partition)):
        b = cell_average(eta.mass, partition, i)
        target = eta(partition.representatives[i])
        if b == 0.0 or target.mass == 0.0:
            # nothing to normalize: the cell gets an empty atom block
            weights.append(0.0)
            atoms.append(np.zeros((0, r1)))
            continue
        approx = empirical_approximation(target.normalized(), n, rule)
        weights.append(b)
        atoms.append(np.array(approx.atoms))
    return DiscretizedDGM(partition, n, np.array(weights), tuple(atoms), eta.name)


def reference_fiber(eta: DigraphMeasure, x, n_ref: int = 256, rule: str = "quantile") -> DiscreteMeasure:
    """High-resolution atomic stand-in for eta_x."""
    return empirical_approximation(eta(x), n_ref, rule)


def sampled_at_representatives(eta: DigraphMeasure, partition: Partition,
                               n_ref: int = 256) -> FiberFunction:
    return FiberFunction(partition, [reference_fiber(eta, x, n_ref) for x in partition.representatives])


def evaluation_grid(space: VertexSpace, size: int) -> np.ndarray:
    """A fixed grid of points of X, independent of any partition."""
    kind = space.kind
    if kind == "interval":
        return np.linspace(0.0, 1.0, size)[:, None]
    if kind == "circle":
        return (np.arange(size) / size)[:, None]
    if kind == "square":
        g = np.linspace(0.0, 1.0, size)
        u, v = np.meshgrid(g, g, indexing="ij")
        return np.stack([u.ravel(), v.ravel()], axis=1)
    if kind == "triangle":
        g = np.linspace(0.0, 1.0, size)
        pts = [(a, b) for a in g for b in g if a + b <= 1.0 + 1e-12]
        return np.array(pts)
    if kind == "sphere":
        z = np.linspace(-1.0, 1.0, size + 2)[1:-1]
        lon = 2 * np.pi * np.arange(2 * size) / (2 * size)
        zz, ll = np.meshgrid(z, lon, indexing="ij")
        r = np.sqrt(1 - zz**2)
        return np.stack([r * np.cos(ll), r * np.sin(ll), zz], axis=-1).reshape(-1, 3)
    if kind == "discrete":
        return np.concatenate([1.0 / np.arange(1, size + 1), [0.0]])[:, None]
    raise ValueError(kind)


def discretization_error(eta: DigraphMeasure, disc: DiscretizedDGM, grid_size: int = 64,
                         n_ref: int = 256, points=None) -> float:
    """max over grid points x of d_BL(eta^{m,n} on the cell of x, eta_x)."""
    part = disc.partition
    pts = evaluation_grid(part.space, grid_size) if points is None else np.atleast_2d(points)
    cells = part.locate(pts)
    metric = part.space.metric
    worst = 0.0
    for x, i in zip(pts, cells):
        ref = reference_fiber(eta, x, n_ref)
        worst = max(worst, bl_distance(disc.fiber(i), ref, metric, max_atoms=DEFAULT_LP_CAP))
    return worst


def grid_pairs(space: VertexSpace, grid_size: int):
    """Nearest-neighbour pairs of grid points."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    kind = space.kind
    if kind == "interval":
        g = np.linspace(0.0, 1.0, grid_size)[:, None]
        return [(g[k], g[k + 1]) for k in range(grid_size - 1)]
    if kind == "circle":
        g = (np.arange(grid_size) / grid_size)[:, None]
        return [(g[k], g[(k + 1) % grid_size]) for k in range(grid_size)]
    if kind == "square":
        g = np.linspace(0.0, 1.0, grid_size)
        out = []
        for a in range(grid_size):
            for b in range(grid_size):
                if a + 1 < grid_size:
                    out.append((np.array([g[a], g[b]]), np.array([g[a + 1], g[b]])))
                if b + 1 < grid_size:
                    out.append((np.array([g[a], g[b]]), np.array([g[a], g[b + 1]])))
        return out
    if kind == "triangle":
        g = np.linspace(0.0, 1.0, grid_size)
        out = []
        for a in range(grid_size):
            for b in range(grid_size - a):
                p = np.array([g[a], g[b]])
                if a + 1 + b < grid_size:
                    out.append((p, np.array([g[a + 1], g[b]])))
                    out.append((p, np.array([g[a], g[b + 1]])))
        return out
    if kind == "sphere":
        z = np.linspace(-1.0, 1.0, grid_size + 2)[1:-1]
        lon = 2 * np.pi * np.arange(2 * grid_size) / (2 * grid_size)

        def pt(zi, li):
            r = np.sqrt(1 - z[zi] ** 2)
            return np.array([r * np.cos(lon[li]), r * np.sin(lon[li]), z[zi]])

        out = []
        for zi in range(len(z)):
            for li in range(len(lon)):
                out.append((pt(zi, li), pt(zi, (li + 1) % len(lon))))
                if zi + 1 < len(z):
                    out.append((pt(zi, li), pt(zi + 1, li)))
        return out
    if kind == "discrete":
        g = np.concatenate([1.0 / np.arange(1, grid_size + 1), [0.0]])[:, None]
        return [(g[k], g[k + 1]) for k in range(len(g) - 1)]
    raise ValueError(kind)


def continuity_modulus(eta: DigraphMeasure, grid_size: int, n_ref: int = 128) -> float:
    """max over neighbouring grid pairs (x, y) of d_BL(eta_x, eta_y)."""
    metric = eta.space.metric
    worst = 0.0
    for x, y in grid_pairs(eta.space, grid_size):
        worst = max(worst, bl_distance(reference_fiber(eta, x, n_ref),
                                       reference_fiber(eta, y, n_ref), metric))
    return worst


def sup_mass(eta: DigraphMeasure, grid_size: int = 257) -> float:
    """Sampled sup_x of the fiber mass."""
    return max(eta.mass(x) for x in evaluation_grid(eta.space, grid_size))
