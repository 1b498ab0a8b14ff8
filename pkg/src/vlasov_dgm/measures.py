"""Finite positive discrete measures and exact distances between them.

The bounded-Lipschitz and Kantorovich-Rubinstein distances are solved as
linear programs over the union of atoms.  The total variation distance is a
closed-form sum over merged atoms.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sps
from scipy.optimize import linprog

MERGE_TOL = 1e-12
MASS_TOL = 1e-12
DEFAULT_LP_CAP = 400
_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


class LPTooLargeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# metrics


class Metric:
    """A distance on points stored as rows of a 2-D array."""

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x, y) -> float:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return float(self.pairwise(x, y)[0, 0])


class L1Metric(Metric):
    def pairwise(self, a, b):
        return np.abs(a[:, None, :] - b[None, :, :]).sum(axis=-1)

    def __eq__(self, other):
        return type(other) is L1Metric

    def __hash__(self):
        return hash("l1")

    def __repr__(self):
        return "L1Metric()"


class CircleMetric(Metric):
    """Arc-length distance on R / (period Z), coordinates taken mod period."""

    def __init__(self, period: float = 1.0):
        if not period > 0:
            raise ValueError("period must be positive")
        self.period = float(period)

    def pairwise(self, a, b):
        diff = np.abs(a[:, None, 0] - b[None, :, 0]) % self.period
        return np.minimum(diff, self.period - diff)

    def __eq__(self, other):
        return isinstance(other, CircleMetric) and other.period == self.period

    def __hash__(self):
        return hash(("circle", self.period))

    def __repr__(self):
        return f"CircleMetric(period={self.period!r})"


class ProductMetric(Metric):
    """Sum of component metrics acting on consecutive coordinate blocks."""

    def __init__(self, parts: Sequence[tuple[Metric, int]]):
        self.parts = tuple((m, int(k)) for m, k in parts)

    def pairwise(self, a, b):
        out = np.zeros((a.shape[0], b.shape[0]))
        start = 0
        for metric, k in self.parts:
            out += metric.pairwise(a[:, start:start + k], b[:, start:start + k])
            start += k
        return out

    def __eq__(self, other):
        return isinstance(other, ProductMetric) and other.parts == self.parts

    def __hash__(self):
        return hash(self.parts)

    def __repr__(self):
        return f"ProductMetric({list(self.parts)!r})"


class CallableMetric(Metric):
    """Wraps a plain function d(x, y) of two coordinate vectors."""

    def __init__(self, func: Callable[[np.ndarray, np.ndarray], float]):
        self.func = func

    def pairwise(self, a, b):
        return np.array([[float(self.func(x, y)) for y in b] for x in a])


def as_metric(metric) -> Metric:
    if metric is None:
        return L1Metric()
    if isinstance(metric, Metric):
        return metric
    if callable(metric):
        return CallableMetric(metric)
    raise TypeError(f"not a metric: {metric!r}")


def _is_line(metric: Metric, dim: int) -> bool:
    return dim == 1 and (isinstance(metric, L1Metric) or (
        isinstance(metric, ProductMetric)
        and len(metric.parts) == 1
        and isinstance(metric.parts[0][0], L1Metric)))


# ---------------------------------------------------------------------------
# measures


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted atoms; ``atoms`` has shape (k, d) and ``weights`` shape (k,)."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if atoms.ndim == 1:
            atoms = atoms.reshape(len(weights), -1) if len(weights) else atoms.reshape(0, 1)
        if atoms.ndim != 2 or atoms.shape[0] != weights.shape[0]:
            raise ValueError("atoms and weights have different lengths")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atom coordinates must be finite")
        if not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def zero(cls, dim: int = 1) -> "DiscreteMeasure":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def dirac(cls, point, mass: float = 1.0) -> "DiscreteMeasure":
        point = np.atleast_1d(np.asarray(point, dtype=float))
        return cls(point[None, :], [mass])

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def scaled(self, c: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.atoms, c * self.weights)

    def merged(self, tol: float = MERGE_TOL) -> "DiscreteMeasure":
        atoms, weights = _merge(self.atoms, self.weights, tol)
        return DiscreteMeasure(atoms, weights)

    def __repr__(self):
        return f"DiscreteMeasure(size={self.size}, dim={self.dim}, mass={self.total_mass:.6g})"


@dataclass(frozen=True, eq=False)
class FiberFunction:
    """Piecewise-constant map from partition cells to discrete measures."""

    partition: object
    fibers: tuple

    def __post_init__(self):
        fibers = tuple(self.fibers)
        if len(fibers) != len(self.partition):
            raise ValueError(
                f"expected {len(self.partition)} fibers, got {len(fibers)}")
        object.__setattr__(self, "fibers", fibers)

    def __len__(self):
        return len(self.fibers)

    def __getitem__(self, i) -> DiscreteMeasure:
        return self.fibers[i]

    def masses(self) -> np.ndarray:
        return np.array([f.total_mass for f in self.fibers])


def _group(atoms, tol):
    """Label atoms so that points closer than ``tol`` in l1 share a label."""
    k = len(atoms)
    label = -np.ones(k, dtype=int)
    reps = []
    if k == 0:
        return label, reps
    d = np.abs(atoms[:, None, :] - atoms[None, :, :]).sum(axis=-1)
    for i in range(k):
        if label[i] >= 0:
            continue
        close = (d[i] < tol) & (label < 0)
        label[close] = len(reps)
        reps.append(i)
    return label, reps


def _merge(atoms, weights, tol):
    label, reps = _group(atoms, tol)
    new_w = np.zeros(len(reps))
    np.add.at(new_w, label, weights)
    return atoms[reps], new_w


def _signed_union(mu: DiscreteMeasure, nu: DiscreteMeasure, metric=None, tol=MERGE_TOL):
    if mu.dim != nu.dim and mu.size and nu.size:
        raise ValueError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    dim = mu.dim if mu.size else nu.dim
    atoms = np.vstack([mu.atoms.reshape(-1, dim), nu.atoms.reshape(-1, dim)])
    if isinstance(metric, CircleMetric):
        atoms = atoms % metric.period
    signed = np.concatenate([mu.weights, -nu.weights])
    return _merge(atoms, signed, tol)


def _lipschitz_edges(points: np.ndarray, metric: Metric):
    """Pairs (k, l) whose Lipschitz constraints imply all the others.

    For points on a line or a circle, neighbours in sorted order suffice.
    Otherwise an edge is dropped when some third point lies metrically
    between its ends, since the two shorter constraints then imply it.
    """
    n = len(points)
    if n < 2:
        return np.zeros((0, 2), dtype=int), np.zeros(0)
    if _is_line(metric, points.shape[1]) or isinstance(metric, CircleMetric):
        key = points[:, 0]
        if isinstance(metric, CircleMetric):
            key = key % metric.period
        order = np.argsort(key, kind="stable")
        pairs = np.stack([order[:-1], order[1:]], axis=1)
        if isinstance(metric, CircleMetric) and n > 2:
            pairs = np.vstack([pairs, [[order[-1], order[0]]]])
        d = np.array([metric.pairwise(points[[a]], points[[b]])[0, 0] for a, b in pairs])
        return pairs, d
    if isinstance(metric, L1Metric) and points.shape[1] == 2:
        return _plane_l1_edges(points, metric)
    d = metric.pairwise(points, points)
    keep = []
    dist = []
    for k in range(n - 1):
        via = d[k][:, None] + d
        via[k, :] = np.inf
        np.fill_diagonal(via, np.inf)
        best = via.min(axis=0)
        ls = k + 1 + np.flatnonzero(best[k + 1:] > d[k, k + 1:] * (1.0 + 1e-13))
        keep.append(np.stack([np.full(len(ls), k), ls], axis=1))
        dist.append(d[k, ls])
    return np.vstack(keep).astype(int).reshape(-1, 2), np.concatenate(dist)


def _plane_l1_edges(points: np.ndarray, metric: Metric):
    """Same pruning for distinct points in the l1 plane.

    In l1 a third point is metrically between k and l exactly when it lies in
    their bounding box, so the kept partners of k are, per quadrant, the
    points not dominated by a closer one in both coordinates.
    """
    n = len(points)
    found = set()
    for k in range(n):
        delta = points - points[k]
        for sx in (1.0, -1.0):
            for sy in (1.0, -1.0):
                dx, dy = sx * delta[:, 0], sy * delta[:, 1]
                idx = np.flatnonzero((dx >= 0) & (dy >= 0))
                idx = idx[idx != k]
                if len(idx) == 0:
                    continue
                order = np.lexsort((dy[idx], dx[idx]))
                idx = idx[order]
                ys = dy[idx]
                prior = np.concatenate([[np.inf], np.minimum.accumulate(ys)[:-1]])
                for l in idx[ys < prior]:
                    found.add((min(k, l), max(k, l)))
    pairs = np.array(sorted(found), dtype=int).reshape(-1, 2)
    d = np.abs(points[pairs[:, 0]] - points[pairs[:, 1]]).sum(axis=1)
    return pairs, d


def _check_cap(mu, nu, cap):
    total = mu.size + nu.size
    if cap is not None and total > cap:
        raise LPTooLargeError(
            f"{total} combined atoms is too large for exact LP (cap {cap})")


def bl_distance(mu: DiscreteMeasure, nu: DiscreteMeasure, metric=None,
                max_atoms: int | None = DEFAULT_LP_CAP) -> float:
    """Bounded-Lipschitz distance: sup of integral f d(mu - nu) over ||f||_inf + Lip(f) <= 1."""
    metric = as_metric(metric)
    _check_cap(mu, nu, max_atoms)
    points, c = _signed_union(mu, nu, metric)
    if len(c) == 0 or not np.any(c):
        return 0.0
    n = len(c)
    pairs, dist = _lipschitz_edges(points, metric)
    e = len(pairs)
    # variable order: f_0..f_{n-1}, b, L
    rows, cols, vals = [], [], []
    k = np.arange(n)
    # f_k - b <= 0 and -f_k - b <= 0
    rows += [k, k, n + k, n + k]
    cols += [k, np.full(n, n), k, np.full(n, n)]
    vals += [np.ones(n), -np.ones(n), -np.ones(n), -np.ones(n)]
    if e:
        r = 2 * n + np.arange(e)
        rows += [r, r, r, e + r, e + r, e + r]
        cols += [pairs[:, 0], pairs[:, 1], np.full(e, n + 1),
                 pairs[:, 1], pairs[:, 0], np.full(e, n + 1)]
        vals += [np.ones(e), -np.ones(e), -dist, np.ones(e), -np.ones(e), -dist]
    last = 2 * n + 2 * e
    rows += [np.array([last, last])]
    cols += [np.array([n, n + 1])]
    vals += [np.ones(2)]
    a_ub = sps.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(last + 1, n + 2))
    b_ub = np.zeros(last + 1)
    b_ub[last] = 1.0
    cost = np.concatenate([-c, [0.0, 0.0]])
    bounds = [(None, None)] * n + [(0, None), (0, None)]
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs-ds",
                  options=_HIGHS_OPTIONS)
    if res.status != 0:
        raise RuntimeError(f"bounded-Lipschitz LP failed: {res.message}")
    return max(0.0, float(-res.fun))


def kr_distance(mu: DiscreteMeasure, nu: DiscreteMeasure, metric=None,
                max_atoms: int | None = DEFAULT_LP_CAP) -> float:
    """Kantorovich-Rubinstein distance between measures of equal total mass."""
    metric = as_metric(metric)
    if abs(mu.total_mass - nu.total_mass) > MASS_TOL * max(1.0, mu.total_mass):
        raise ValueError(
            f"mass mismatch: {mu.total_mass!r} vs {nu.total_mass!r}")
    _check_cap(mu, nu, max_atoms)
    points, c = _signed_union(mu, nu, metric)
    if len(c) == 0 or not np.any(c):
        return 0.0
    n = len(c)
    pairs, dist = _lipschitz_edges(points, metric)
    e = len(pairs)
    r = np.arange(e)
    a_ub = sps.csr_matrix(
        (np.concatenate([np.ones(e), -np.ones(e), np.ones(e), -np.ones(e)]),
         (np.concatenate([r, r, e + r, e + r]),
          np.concatenate([pairs[:, 0], pairs[:, 1], pairs[:, 1], pairs[:, 0]]))),
        shape=(2 * e, n))
    b_ub = np.concatenate([dist, dist])
    # the objective is shift invariant; pin one value
    bounds = [(0.0, 0.0)] + [(None, None)] * (n - 1)
    res = linprog(-c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs-ds",
                  options=_HIGHS_OPTIONS)
    if res.status != 0:
        raise RuntimeError(f"Kantorovich-Rubinstein LP failed: {res.message}")
    return max(0.0, float(-res.fun))


def tv_distance(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """sup over atom sets A of |mu(A) - nu(A)|."""
    _, c = _signed_union(mu, nu)
    return float(max(c[c > 0].sum(), -c[c < 0].sum(), 0.0))


def d_infinity(eta1: FiberFunction, eta2: FiberFunction, metric=None,
               threads: int | None = None,
               max_atoms: int | None = DEFAULT_LP_CAP) -> float:
    """Largest fiberwise bounded-Lipschitz distance between two fiber functions."""
    pairs = aligned_cells(eta1.partition, eta2.partition)

    def one(pair):
        i, j = pair
        return bl_distance(eta1[i], eta2[j], metric, max_atoms=max_atoms)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(one, pairs))
    else:
        values = [one(p) for p in pairs]
    return float(max(values)) if values else 0.0


def aligned_cells(p1, p2):
    """Index pairs of overlapping cells of two partitions of the same space."""
    if p1 is p2 or p1 == p2:
        return [(i, i) for i in range(len(p1))]
    overlap = getattr(p1, "overlapping_cells", None)
    if overlap is None:
        raise ValueError("partition mismatch")
    pairs = overlap(p2)
    if not pairs:
        raise ValueError("partition mismatch after alignment attempt")
    return pairs


def product_lift(eta: FiberFunction, cell_masses=None) -> DiscreteMeasure:
    """The measure on X x Y putting mu_X(A_i) * fiber weight at (x_i, fiber atom)."""
    part = eta.partition
    masses = part.masses if cell_masses is None else np.asarray(cell_masses, dtype=float)
    if len(masses) != len(eta):
        raise ValueError("need one cell mass per fiber")
    reps = np.asarray(part.representatives, dtype=float)
    atoms, weights = [], []
    for i, fiber in enumerate(eta.fibers):
        if fiber.size == 0:
            continue
        x = np.repeat(reps[i][None, :], fiber.size, axis=0)
        atoms.append(np.hstack([x, fiber.atoms]))
        weights.append(masses[i] * fiber.weights)
    if not atoms:
        ydim = max((f.dim for f in eta.fibers), default=1)
        return DiscreteMeasure.zero(reps.shape[1] + ydim)
    return DiscreteMeasure(np.vstack(atoms), np.concatenate(weights))


# ---------------------------------------------------------------------------
# closed-form measure descriptors and their n-atom approximations


def quantile_levels(n: int, rule: str = "quantile") -> np.ndarray:
    """Probability levels j/(n+1) ("quantile") or (2j-1)/(2n) ("midpoint")."""
    if n < 1:
        raise ValueError("n must be at least 1")
    j = np.arange(1, n + 1)
    if rule == "quantile":
        return j / (n + 1)
    if rule == "midpoint":
        return (2 * j - 1) / (2 * n)
    raise ValueError(f"unknown quantile rule {rule!r}")


def circle_offsets(n: int, rule: str = "quantile") -> np.ndarray:
    """Equally spaced fractions of a full turn."""
    if n < 1:
        raise ValueError("n must be at least 1")
    j = np.arange(n)
    return (j + (0.5 if rule == "midpoint" else 0.0)) / n


def cantor_quantile(p) -> np.ndarray:
    """Left-continuous inverse of the Cantor function.

    Binary digits of p become ternary digits 0/2; dyadic p use the expansion
    ending in ones, which gives inf{x : F(x) >= p}.
    """
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("levels must lie in [0, 1]")
    x = np.zeros_like(p)
    r = p.copy()
    scale = 1.0
    for _ in range(60):
        scale /= 3.0
        r = 2.0 * r
        bit = r > 1.0
        x = x + np.where(bit, 2.0 * scale, 0.0)
        r = np.where(bit, r - 1.0, r)
    return x


def cantor_cdf(x) -> np.ndarray:
    """The Cantor function on [0, 1]."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    out = np.zeros_like(x)
    r = x.copy()
    scale = 1.0
    done = np.zeros(x.shape, dtype=bool)
    for _ in range(60):
        scale /= 2.0
        r = 3.0 * r
        digit = np.floor(r)
        digit = np.minimum(digit, 2.0)
        mid = (digit == 1) & ~done
        out = np.where(mid, out + scale, out)
        done |= mid
        out = np.where((digit == 2) & ~done, out + scale, out)
        r = r - digit
    return np.where(x >= 1.0, 1.0, out)


class MeasureDescriptor:
    """A closed-form finite measure that can be approximated by n equal atoms."""

    def points(self, n: int, rule: str = "quantile") -> np.ndarray:
        raise NotImplementedError

    def with_mass(self, mass: float) -> "MeasureDescriptor":
        raise NotImplementedError

    def normalized(self) -> "MeasureDescriptor":
        return self.with_mass(1.0)


@dataclass(frozen=True)
class Dirac(MeasureDescriptor):
    point: tuple
    mass: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(np.atleast_1d(np.asarray(self.point, dtype=float)).tolist()))

    @property
    def dim(self):
        return len(self.point)

    def points(self, n, rule="quantile"):
        quantile_levels(n, rule)
        return np.repeat(np.asarray(self.point)[None, :], n, axis=0)

    def with_mass(self, mass):
        return Dirac(self.point, mass)


@dataclass(frozen=True)
class Segment(MeasureDescriptor):
    """Uniform measure on the segment from ``start`` to ``end`` in R^d."""

    start: tuple
    end: tuple
    mass: float = 1.0

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.start, dtype=float))
        e = np.atleast_1d(np.asarray(self.end, dtype=float))
        if s.shape != e.shape:
            raise ValueError("segment ends differ in dimension")
        object.__setattr__(self, "start", tuple(s.tolist()))
        object.__setattr__(self, "end", tuple(e.tolist()))

    @property
    def dim(self):
        return len(self.start)

    def quantile(self, p):
        p = np.asarray(p, dtype=float)[:, None]
        s, e = np.asarray(self.start), np.asarray(self.end)
        return s + p * (e - s)

    def points(self, n, rule="quantile"):
        return self.quantile(quantile_levels(n, rule))

    def with_mass(self, mass):
        return Segment(self.start, self.end, mass)


def Uniform(a: float, b: float, mass: float = 1.0) -> Segment:
    """Uniform measure on the real interval [a, b]."""
    return Segment((a,), (b,), mass)


@dataclass(frozen=True)
class Arc(MeasureDescriptor):
    """Uniform measure on an arc of R / (period Z).

    A full turn gets n equally spaced points; a proper arc uses quantile levels.
    Coordinates are reported in [0, period).
    """

    start: float
    length: float
    period: float = 1.0
    mass: float = 1.0

    dim = 1

    def __post_init__(self):
        if not 0 <= self.length <= self.period:
            raise ValueError("arc length must lie in [0, period]")

    def points(self, n, rule="quantile"):
        if np.isclose(self.length, self.period, rtol=0, atol=1e-15 * self.period):
            frac = circle_offsets(n, rule)
        else:
            frac = quantile_levels(n, rule)
        return ((self.start + frac * self.length) % self.period)[:, None]

    def with_mass(self, mass):
        return Arc(self.start, self.length, self.period, mass)


def Circle(period: float = 1.0, start: float = 0.0, mass: float = 1.0) -> Arc:
    return Arc(start, period, period, mass)


@dataclass(frozen=True)
class PlanarCircle(MeasureDescriptor):
    """Uniform measure on a circle in R^2."""

    center: tuple
    radius: float
    angle0: float = 0.0
    mass: float = 1.0

    dim = 2

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(np.asarray(self.center, dtype=float).tolist()))

    def points(self, n, rule="quantile"):
        theta = self.angle0 + 2 * np.pi * circle_offsets(n, rule)
        c = np.asarray(self.center)
        return c + self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)

    def with_mass(self, mass):
        return PlanarCircle(self.center, self.radius, self.angle0, mass)


def great_circle_frame(normal) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal (u, v) spanning the plane orthogonal to ``normal``.

    u is built from the coordinate axis least aligned with the normal, so the
    parameterization is deterministic.
    """
    x = np.asarray(normal, dtype=float)
    x = x / np.linalg.norm(x)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(x)))] = 1.0
    u = np.cross(x, axis)
    u /= np.linalg.norm(u)
    v = np.cross(x, u)
    return u, v


@dataclass(frozen=True)
class GreatCircle(MeasureDescriptor):
    """Uniform measure on the great circle of the unit sphere orthogonal to ``normal``."""

    normal: tuple
    mass: float = 1.0

    dim = 3

    def __post_init__(self):
        object.__setattr__(self, "normal", tuple(np.asarray(self.normal, dtype=float).tolist()))

    def points(self, n, rule="quantile"):
        u, v = great_circle_frame(self.normal)
        theta = 2 * np.pi * circle_offsets(n, rule)
        return np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * v

    def with_mass(self, mass):
        return GreatCircle(self.normal, mass)


@dataclass(frozen=True)
class Cantor(MeasureDescriptor):
    """Cantor measure scaled onto [offset, offset + scale], optionally wrapped."""

    offset: float = 0.0
    scale: float = 1.0
    period: float | None = None
    mass: float = 1.0

    dim = 1

    def points(self, n, rule="quantile"):
        z = self.offset + self.scale * cantor_quantile(quantile_levels(n, rule))
        if self.period is not None:
            z = z % self.period
        return z[:, None]

    def with_mass(self, mass):
        return Cantor(self.offset, self.scale, self.period, mass)


@dataclass(frozen=True)
class Atomic(MeasureDescriptor):
    """Finite atomic measure.  In one dimension atoms are ordered by position
    before quantiles are taken; otherwise the listing order is used."""

    atoms: tuple
    weights: tuple

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(w) != len(a):
            raise ValueError("atoms and weights have different lengths")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if a.shape[1] == 1:
            order = np.argsort(a[:, 0], kind="stable")
            a, w = a[order], w[order]
        object.__setattr__(self, "atoms", tuple(map(tuple, a.tolist())))
        object.__setattr__(self, "weights", tuple(w.tolist()))

    @property
    def dim(self):
        return len(self.atoms[0]) if self.atoms else 1

    @property
    def mass(self):
        return float(sum(self.weights))

    def quantile(self, p):
        w = np.asarray(self.weights)
        cum = np.cumsum(w) / w.sum()
        idx = np.searchsorted(cum, np.asarray(p) - 1e-14, side="left")
        idx = np.minimum(idx, len(w) - 1)
        return np.asarray(self.atoms)[idx]

    def points(self, n, rule="quantile"):
        if self.mass <= 0:
            raise ValueError("cannot take quantiles of a zero measure")
        return self.quantile(quantile_levels(n, rule))

    def with_mass(self, mass):
        w = np.asarray(self.weights)
        total = w.sum()
        if total <= 0:
            return self
        return Atomic(self.atoms, tuple((w * (mass / total)).tolist()))

    def measure(self) -> DiscreteMeasure:
        return DiscreteMeasure(np.asarray(self.atoms).reshape(-1, self.dim), self.weights)


@dataclass(frozen=True)
class Zero(MeasureDescriptor):
    """The zero measure."""

    dim: int = 1
    mass: float = 0.0

    def points(self, n, rule="quantile"):
        raise ValueError("cannot take quantiles of a zero measure")

    def with_mass(self, mass):
        return self


def empirical_approximation(target: MeasureDescriptor, n: int,
                            rule: str = "quantile") -> DiscreteMeasure:
    """(mass/n) times the sum of Dirac masses at n deterministic points of ``target``."""
    if not isinstance(target, MeasureDescriptor):
        raise TypeError(f"unsupported descriptor: {target!r}")
    if n < 1:
        raise ValueError("n must be at least 1")
    mass = float(target.mass)
    if mass == 0.0:
        return DiscreteMeasure.zero(target.dim)
    pts = np.asarray(target.points(n, rule), dtype=float).reshape(n, -1)
    return DiscreteMeasure(pts, np.full(n, mass / n))


# ---------------------------------------------------------------------------
# text serialization


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def format_measure(mu: DiscreteMeasure) -> str:
    lines = [f"{mu.dim},{mu.size},{_fmt(mu.total_mass)}"]
    for w, z in zip(mu.weights, mu.atoms):
        lines.append(",".join([_fmt(w)] + [_fmt(c) for c in z]))
    return "\n".join(lines) + "\n"


def parse_measure(text: str) -> DiscreteMeasure:
    rows = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if rows and rows[0].replace(" ", "") == "dim,count,mass":
        rows = rows[1:]
    if not rows:
        raise ValueError("empty measure file")
    head = rows[0].split(",")
    if len(head) != 3:
        raise ValueError("header must be dim,count,mass")
    dim, count = int(head[0]), int(head[1])
    body = rows[1:]
    if len(body) != count:
        raise ValueError(f"header announces {count} atoms, found {len(body)}")
    data = np.array([[float(v) for v in r.split(",")] for r in body]).reshape(count, dim + 1)
    mu = DiscreteMeasure(data[:, 1:], data[:, 0])
    if abs(mu.total_mass - float(head[2])) > 1e-9 * max(1.0, abs(float(head[2]))):
        raise ValueError("header mass does not match the atom weights")
    return mu


def write_measure(path, mu: DiscreteMeasure) -> None:
    with open(path, "w") as fh:
        fh.write(format_measure(mu))


def read_measure(path) -> DiscreteMeasure:
    with open(path) as fh:
        return parse_measure(fh.read())
