"""Compact vertex spaces with reference probability measures, and their partitions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .measures import CircleMetric, L1Metric

KINDS = ("interval", "circle", "sphere", "square", "triangle", "discrete")
_GL = np.polynomial.legendre.leggauss
DISCRETE_TERMS = 80  # atoms 1/i with 2^{-i+1} below double precision are dropped


@dataclass(frozen=True)
class VertexSpace:
    kind: str
    ambient_dim: int
    reference_measure: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown vertex space {self.kind!r}")

    @property
    def metric(self):
        return CircleMetric(1.0) if self.kind == "circle" else L1Metric()

    @property
    def box_based(self) -> bool:
        return self.kind in ("interval", "circle", "square")


def vertex_space(kind: str) -> VertexSpace:
    """The six supported spaces with their reference measures."""
    table = {
        "interval": (1, "lebesgue"),
        "circle": (1, "haar"),
        "sphere": (3, "uniform"),
        "square": (2, "lebesgue"),
        "triangle": (2, "uniform-on-segment"),
        "discrete": (1, "weighted-atomic"),
    }
    if kind not in table:
        raise ValueError(f"unknown vertex space {kind!r}")
    dim, ref = table[kind]
    return VertexSpace(kind, dim, ref)


# ---------------------------------------------------------------------------
# cells


@dataclass(frozen=True)
class BoxCell:
    """Axis-aligned box, half-open on the upper side except at the domain edge."""

    lo: tuple
    hi: tuple
    closed: tuple  # per axis: upper side included

    def contains(self, pts):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        upper = np.where(self.closed, pts <= hi, pts < hi)
        return np.all((pts >= lo) & upper, axis=1)

    def bbox(self):
        return np.asarray(self.lo), np.asarray(self.hi)

    def diameter(self):
        return float(np.sum(np.asarray(self.hi) - np.asarray(self.lo)))


@dataclass(frozen=True)
class SphereCell:
    """{z0 <= z < z1} x {lon0 <= lon < lon1} on the unit sphere."""

    z0: float
    z1: float
    lon0: float
    lon1: float

    def contains(self, pts):
        z = np.clip(pts[:, 2], -1.0, 1.0)
        lon = np.arctan2(pts[:, 1], pts[:, 0]) % (2 * np.pi)
        z_ok = (z >= self.z0) & ((z < self.z1) | (self.z1 >= 1.0))
        lon_ok = (lon >= self.lon0) & (lon < self.lon1)
        if self.lon1 >= 2 * np.pi:
            lon_ok |= lon >= self.lon0
        return z_ok & lon_ok

    def sample(self, k=33):
        z = np.linspace(self.z0, self.z1, k)
        lon = np.linspace(self.lon0, self.lon1, k)
        zz, ll = np.meshgrid(z, lon, indexing="ij")
        r = np.sqrt(np.maximum(0.0, 1 - zz**2))
        return np.stack([r * np.cos(ll), r * np.sin(ll), zz], axis=-1).reshape(-1, 3)

    def bbox(self):
        s = self.sample()
        return s.min(axis=0), s.max(axis=0)

    def diameter(self):
        s = self.sample(9)
        return float(np.abs(s[:, None, :] - s[None, :, :]).sum(-1).max())


@dataclass(frozen=True)
class TriangleCell:
    vertices: tuple  # three (x, y) pairs

    def _bary(self, pts):
        v = np.asarray(self.vertices)
        t = np.column_stack([v[1] - v[0], v[2] - v[0]])
        lam = np.linalg.solve(t, (pts - v[0]).T).T
        return np.column_stack([1 - lam.sum(axis=1), lam])

    def contains(self, pts, tol=1e-12):
        return np.all(self._bary(pts) >= -tol, axis=1)

    def centroid(self):
        return np.asarray(self.vertices).mean(axis=0)

    def bbox(self):
        v = np.asarray(self.vertices)
        return v.min(axis=0), v.max(axis=0)

    def diameter(self):
        v = np.asarray(self.vertices)
        return float(np.abs(v[:, None, :] - v[None, :, :]).sum(-1).max())

    def clip_segment(self, a, b):
        """Parameter interval [s0, s1] of a + s(b - a), s in [0, 1], inside the cell."""
        v = np.asarray(self.vertices)
        a, b = np.asarray(a, float), np.asarray(b, float)
        s0, s1 = 0.0, 1.0
        centroid = v.mean(axis=0)
        for k in range(3):
            p, q = v[k], v[(k + 1) % 3]
            edge = q - p
            normal = np.array([edge[1], -edge[0]])
            if np.dot(normal, centroid - p) > 0:
                normal = -normal
            # inside: normal . (x - p) <= 0
            num = -np.dot(normal, a - p)
            den = np.dot(normal, b - a)
            if abs(den) < 1e-15:
                if num < -1e-15:
                    return None
                continue
            s = num / den
            if den > 0:
                s1 = min(s1, s)
            else:
                s0 = max(s0, s)
        if s1 - s0 <= 1e-15:
            return None
        return s0, s1


@dataclass(frozen=True)
class DiscreteCell:
    """Either the singleton {1/i} or the tail {1/k : k >= i} with 0."""

    index: int
    tail: bool

    def contains(self, pts, tol=1e-12):
        y = pts[:, 0]
        if self.tail:
            return y <= 1.0 / self.index + tol
        return np.abs(y - 1.0 / self.index) <= tol

    def atoms(self):
        """(points, mu_X weights) of the cell; mu_X gives 1/i the weight 2^{-i+1} for i >= 2."""
        if self.tail:
            idx = np.arange(self.index, self.index + DISCRETE_TERMS)
        else:
            idx = np.array([self.index])
        w = np.where(idx >= 2, 2.0 ** (-idx + 1.0), 0.0)
        return (1.0 / idx)[:, None], w

    def bbox(self):
        hi = 1.0 / self.index
        return np.array([0.0 if self.tail else hi]), np.array([hi])

    def diameter(self):
        return 1.0 / self.index if self.tail else 0.0


# ---------------------------------------------------------------------------
# partitions


@dataclass(frozen=True, eq=False)
class Partition:
    space: VertexSpace
    m: int
    cells: tuple
    representatives: np.ndarray
    masses: np.ndarray
    key: tuple = field(default=())

    def __post_init__(self):
        for arr in (self.representatives, self.masses):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.cells)

    def __eq__(self, other):
        return isinstance(other, Partition) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def diameters(self) -> np.ndarray:
        return np.array([c.diameter() for c in self.cells])

    def locate(self, points) -> np.ndarray:
        """Index of the unique cell containing each point (first match wins on shared edges)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.space.kind == "circle":
            pts = pts % 1.0
            pts[pts >= 1.0] = 0.0
        out = -np.ones(len(pts), dtype=int)
        for i, cell in enumerate(self.cells):
            free = out < 0
            if not free.any():
                break
            hit = np.zeros(len(pts), dtype=bool)
            hit[free] = cell.contains(pts[free])
            out[hit] = i
        if np.any(out < 0):
            bad = pts[np.argmax(out < 0)]
            raise ValueError(f"point {bad.tolist()} lies outside every cell")
        return out

    def overlapping_cells(self, other: "Partition"):
        """Pairs (i, j) of box cells with overlapping interiors."""
        if self.space != other.space or not self.space.box_based:
            return []
        pairs = []
        for i, a in enumerate(self.cells):
            for j, b in enumerate(other.cells):
                lo = np.maximum(a.lo, b.lo)
                hi = np.minimum(a.hi, b.hi)
                if np.all(hi - lo > 1e-15):
                    pairs.append((i, j))
        return pairs

    def format(self) -> str:
        """One row per cell: id, mass, representative, bbox lower, bbox upper."""
        rows = []
        for i, cell in enumerate(self.cells):
            lo, hi = cell.bbox()
            vals = [self.masses[i], *self.representatives[i], *lo, *hi]
            rows.append(",".join([str(i)] + [format(float(v), ".17g") for v in vals]))
        return "\n".join(rows) + "\n"


def _grid_size(m: int, r: int) -> int:
    k = max(1, int(round(m ** (1.0 / r))))
    while k ** r > m:
        k -= 1
    while (k + 1) ** r <= m:
        k += 1
    return k


def box_cells(r: int, m: int) -> list[BoxCell]:
    """Equipartition of [0,1]^r into floor(m^{1/r})^r cubes, then halve the
    largest boxes along their longest side until there are m cells."""
    k = _grid_size(m, r)
    boxes = []
    for idx in np.ndindex(*([k] * r)):
        lo = np.array(idx, dtype=float) / k
        hi = (np.array(idx, dtype=float) + 1) / k
        boxes.append([lo, hi])
    while len(boxes) < m:
        diam = [float(np.sum(h - l)) for l, h in boxes]
        j = int(np.argmax(diam))
        lo, hi = boxes[j]
        axis = int(np.argmax(hi - lo))
        mid = 0.5 * (lo[axis] + hi[axis])
        hi_a, lo_b = hi.copy(), lo.copy()
        hi_a[axis] = mid
        lo_b[axis] = mid
        boxes[j] = [lo, hi_a]
        boxes.insert(j + 1, [lo_b, hi])
    return [BoxCell(tuple(l.tolist()), tuple(h.tolist()), tuple((h >= 1.0).tolist()))
            for l, h in boxes]


def _sphere_cells(m: int) -> list[SphereCell]:
    bands = max(1, min(m, int(round(math.sqrt(math.pi * m / 4.0)))))
    edges = np.linspace(-1.0, 1.0, bands + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    width = np.sqrt(np.maximum(1 - mids**2, 0.0))
    share = width / width.sum() * m
    counts = np.maximum(1, np.floor(share).astype(int))
    while counts.sum() > m:
        j = int(np.argmax(counts - share))
        counts[j] -= 1
    while counts.sum() < m:
        j = int(np.argmax(share - counts))
        counts[j] += 1
    cells = []
    for b in range(bands):
        c = counts[b]
        for s in range(c):
            hi = 2 * np.pi if s == c - 1 else 2 * np.pi * (s + 1) / c
            cells.append(SphereCell(float(edges[b]), float(edges[b + 1]), 2 * np.pi * s / c, hi))
    return cells


def _triangle_cells(m: int) -> list[TriangleCell]:
    k = max(1, int(round(math.sqrt(m))))
    h = 1.0 / k
    cells = []
    for q in range(k):
        for p in range(k - q):
            cells.append(TriangleCell(((p * h, q * h), ((p + 1) * h, q * h), (p * h, (q + 1) * h))))
            if p + q <= k - 2:
                cells.append(TriangleCell((((p + 1) * h, q * h), ((p + 1) * h, (q + 1) * h),
                                           (p * h, (q + 1) * h))))
    return cells


TRIANGLE_SEGMENT = ((0.0, 0.0), (0.5, 0.5))


def cell_mass(space: VertexSpace, cell) -> float:
    """mu_X of a cell."""
    kind = space.kind
    if kind in ("interval", "circle", "square"):
        return float(np.prod(np.asarray(cell.hi) - np.asarray(cell.lo)))
    if kind == "sphere":
        return (cell.z1 - cell.z0) / 2.0 * (cell.lon1 - cell.lon0) / (2 * np.pi)
    if kind == "triangle":
        span = cell.clip_segment(*TRIANGLE_SEGMENT)
        return 0.0 if span is None else span[1] - span[0]
    if kind == "discrete":
        return float(cell.atoms()[1].sum())
    raise ValueError(kind)


def representative(space: VertexSpace, cell) -> np.ndarray:
    """mu_X barycenter of the cell, or its centroid when the cell is null."""
    kind = space.kind
    if kind in ("interval", "circle", "square"):
        return 0.5 * (np.asarray(cell.lo) + np.asarray(cell.hi))
    if kind == "sphere":
        z0, z1, l0, l1 = cell.z0, cell.z1, cell.lon0, cell.lon1

        def prim(z):
            return 0.5 * (z * np.sqrt(max(0.0, 1 - z * z)) + np.arcsin(z))

        r_mean = (prim(z1) - prim(z0)) / (z1 - z0)
        cx = r_mean * (np.sin(l1) - np.sin(l0)) / (l1 - l0)
        cy = r_mean * (np.cos(l0) - np.cos(l1)) / (l1 - l0)
        bary = np.array([cx, cy, 0.5 * (z0 + z1)])
        norm = np.linalg.norm(bary)
        z = bary[2] / norm if norm > 1e-12 else bary[2]
        lon = np.arctan2(cy, cx) % (2 * np.pi) if np.hypot(cx, cy) > 1e-12 else 0.5 * (l0 + l1)
        # keep the projected point inside the band
        z = min(max(z, z0), z1 if z1 >= 1.0 else np.nextafter(z1, z0))
        r = np.sqrt(max(0.0, 1 - z * z))
        return np.array([r * np.cos(lon), r * np.sin(lon), z])
    if kind == "triangle":
        span = cell.clip_segment(*TRIANGLE_SEGMENT)
        if span is None:
            return cell.centroid()
        a, b = np.asarray(TRIANGLE_SEGMENT)
        return a + 0.5 * (span[0] + span[1]) * (b - a)
    if kind == "discrete":
        # the largest point of the cell; for the tail this is 1/m
        return np.array([1.0 / cell.index])
    raise ValueError(kind)


def quadrature(space: VertexSpace, cell, npts: int = 64):
    """Nodes and weights integrating against mu_X restricted to the cell."""
    kind = space.kind
    if kind in ("interval", "circle"):
        x, w = _GL(npts)
        lo, hi = cell.lo[0], cell.hi[0]
        return (lo + (x + 1) * (hi - lo) / 2)[:, None], w * (hi - lo) / 2
    if kind == "square":
        k = int(round(math.sqrt(npts)))
        x, w = _GL(k)
        lo, hi = np.asarray(cell.lo), np.asarray(cell.hi)
        u = lo[0] + (x + 1) * (hi[0] - lo[0]) / 2
        v = lo[1] + (x + 1) * (hi[1] - lo[1]) / 2
        uu, vv = np.meshgrid(u, v, indexing="ij")
        ww = np.outer(w, w) * np.prod(hi - lo) / 4
        return np.stack([uu.ravel(), vv.ravel()], axis=1), ww.ravel()
    if kind == "sphere":
        k = int(round(math.sqrt(npts)))
        x, w = _GL(k)
        z = cell.z0 + (x + 1) * (cell.z1 - cell.z0) / 2
        lon = cell.lon0 + (x + 1) * (cell.lon1 - cell.lon0) / 2
        zz, ll = np.meshgrid(z, lon, indexing="ij")
        r = np.sqrt(np.maximum(0.0, 1 - zz**2))
        pts = np.stack([r * np.cos(ll), r * np.sin(ll), zz], axis=-1).reshape(-1, 3)
        ww = np.outer(w, w).ravel() * cell_mass(space, cell) / 4
        return pts, ww
    if kind == "triangle":
        span = cell.clip_segment(*TRIANGLE_SEGMENT)
        if span is None:
            return np.zeros((0, 2)), np.zeros(0)
        x, w = _GL(npts)
        s = span[0] + (x + 1) * (span[1] - span[0]) / 2
        a, b = np.asarray(TRIANGLE_SEGMENT)
        return a + s[:, None] * (b - a), w * (span[1] - span[0]) / 2
    if kind == "discrete":
        return cell.atoms()
    raise ValueError(kind)


def make_partition(space: VertexSpace, m: int) -> Partition:
    """Partition of X into (about) m cells with vanishing diameter as m grows.

    Box-based spaces get exactly m cells.  The triangle is cut into k^2
    congruent triangles with k = round(sqrt(m)).
    """
    if isinstance(m, bool) or not isinstance(m, (int, np.integer)) or m < 1:
        raise ValueError("m must be a positive integer")
    m = int(m)
    kind = space.kind
    if kind == "interval":
        cells = box_cells(1, m)
    elif kind == "circle":
        # the circle has no edge; [0,1) cells are all half-open
        cells = [BoxCell(c.lo, c.hi, (False,)) for c in box_cells(1, m)]
    elif kind == "square":
        cells = box_cells(2, m)
    elif kind == "sphere":
        cells = _sphere_cells(m)
    elif kind == "triangle":
        cells = _triangle_cells(m)
    elif kind == "discrete":
        cells = [DiscreteCell(i, False) for i in range(1, m)] + [DiscreteCell(m, True)]
    else:
        raise ValueError(kind)
    reps = np.array([representative(space, c) for c in cells], dtype=float)
    masses = np.array([cell_mass(space, c) for c in cells], dtype=float)
    return Partition(space, m, tuple(cells), reps, masses, key=(space, m, len(cells)))


def total_reference_mass(space: VertexSpace) -> float:
    return float(make_partition(space, 1).masses.sum())
