"""Application models: coupling kernels, intrinsic fields, invariant polytopes,
the discrete Vlasov operator and a sampled Bony boundary check."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .measures import CircleMetric, L1Metric, Metric

BONY_TOL = 1e-9


class ParameterError(ValueError):
    pass


# ---------------------------------------------------------------------------
# invariant polytopes


@dataclass(frozen=True, eq=False)
class InvariantPolytope:
    """{phi : normals @ phi <= offsets}, compact and convex."""

    normals: np.ndarray
    offsets: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        for name in ("normals", "offsets", "lower", "upper"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def box(cls, lower, upper) -> "InvariantPolytope":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        r = len(lower)
        eye = np.eye(r)
        return cls(np.vstack([eye, -eye]), np.concatenate([upper, -lower]), lower, upper)

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def violation(self, pts) -> np.ndarray:
        """Largest constraint excess of each point (<= 0 inside)."""
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, self.dim)
        v = (flat @ self.normals.T - self.offsets).max(axis=1)
        return v.reshape(pts.shape[:-1])

    def contains(self, pts, tol: float = 0.0) -> np.ndarray:
        return self.violation(pts) <= tol

    @property
    def is_box(self) -> bool:
        n = self.normals
        return bool(np.all((np.abs(n) > 0).sum(axis=1) == 1)) and len(n) == 2 * self.dim

    def project(self, pts, iters: int = 500) -> np.ndarray:
        """Euclidean projection onto the polytope (Dykstra's alternating projections)."""
        pts = np.array(pts, dtype=float)
        flat = pts.reshape(-1, self.dim)
        if self.is_box:
            return np.clip(flat, self.lower, self.upper).reshape(pts.shape)
        x = flat.copy()
        k = len(self.offsets)
        incr = np.zeros((k,) + x.shape)
        norms2 = (self.normals ** 2).sum(axis=1)
        for _ in range(iters):
            prev = x.copy()
            for j in range(k):
                y = x + incr[j]
                excess = y @ self.normals[j] - self.offsets[j]
                step = np.maximum(excess, 0.0) / norms2[j]
                new = y - step[:, None] * self.normals[j]
                incr[j] = y - new
                x = new
            if np.max(np.abs(x - prev)) < 1e-16:
                break
        return x.reshape(pts.shape)

    def vertices(self) -> np.ndarray:
        """All vertices, by brute-force enumeration of active constraint sets."""
        r = self.dim
        found = []
        for idx in itertools.combinations(range(len(self.offsets)), r):
            a = self.normals[list(idx)]
            if abs(np.linalg.det(a)) < 1e-12:
                continue
            v = np.linalg.solve(a, self.offsets[list(idx)])
            if self.violation(v[None, :])[0] <= 1e-10 and not any(
                    np.abs(v - w).sum() < 1e-9 for w in found):
                found.append(v)
        return np.array(found)

    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        """Random points as Dirichlet mixtures of the vertices."""
        verts = self.vertices()
        lam = rng.dirichlet(np.ones(len(verts)), size=k)
        return lam @ verts


# ---------------------------------------------------------------------------
# kernels


@dataclass(frozen=True, eq=False)
class Kernel:
    """Coupling kernel g(t, psi, phi): psi is the neighbour state, phi the own state.

    ``features``/``combine`` optionally express
    sum_q g(t, psi_q, phi) = combine(t, sum_q features(t, psi_q), phi)
    with ``combine`` linear in its second argument, which turns the coupling
    sums into matrix products.
    """

    func: Callable
    features: Callable | None = None
    combine: Callable | None = None
    name: str = "g"

    def __call__(self, t, psi, phi):
        return self.func(t, np.asarray(psi, dtype=float), np.asarray(phi, dtype=float))

    @property
    def separable(self) -> bool:
        return self.features is not None and self.combine is not None

    def aggregate(self, t, weights: np.ndarray, sources: np.ndarray, cells: np.ndarray,
                  targets: np.ndarray) -> np.ndarray:
        """Row k: sum_p weights[cells[k], p] * sum_q g(t, sources[p, q], targets[k])."""
        if self.separable:
            moments = self.features(t, sources).sum(axis=1)
            mixed = weights @ moments
            return self.combine(t, mixed[cells], targets)
        out = np.zeros_like(targets)
        for i in np.unique(cells):
            sel = cells == i
            phi = targets[sel]
            acc = np.zeros_like(phi)
            for p in np.flatnonzero(weights[i]):
                vals = self(t, sources[p][None, :, :], phi[:, None, :]).sum(axis=1)
                acc += weights[i, p] * vals
            out[sel] = acc
        return out


def zero_kernel(r2: int) -> Kernel:
    return Kernel(
        lambda t, psi, phi: np.zeros(np.broadcast_shapes(psi.shape, phi.shape)),
        lambda t, psi: np.zeros(psi.shape[:-1] + (1,)),
        lambda t, mom, phi: np.zeros_like(phi),
        name="zero")


# ---------------------------------------------------------------------------
# model specification


@dataclass(frozen=True, eq=False)
class ModelSpec:
    name: str
    r2: int
    kernels: tuple
    h: Callable  # (t, x[..., r1], phi[..., r2]) -> [..., r2]
    polytope: InvariantPolytope | None
    params: dict = field(default_factory=dict)
    metric: Metric = field(default_factory=L1Metric)
    conserved: np.ndarray | None = None
    # coordinates that live on a circle of this period (None = flat)
    period: float | None = None

    @property
    def r(self) -> int:
        return len(self.kernels)

    def intrinsic(self, t, x, phi):
        x = np.asarray(x, dtype=float)
        phi = np.asarray(phi, dtype=float)
        return np.broadcast_to(self.h(t, x, phi), phi.shape).astype(float)

    def state_box(self):
        """A box containing every admissible state (one period for circle states)."""
        if self.polytope is not None:
            return self.polytope.lower, self.polytope.upper
        return np.zeros(self.r2), np.full(self.r2, self.period)

    def sample_states(self, k: int, rng: np.random.Generator) -> np.ndarray:
        if self.polytope is not None:
            return self.polytope.sample(k, rng)
        lo, hi = self.state_box()
        return rng.uniform(lo, hi, size=(k, self.r2))


def _x0(x):
    return np.asarray(x, dtype=float)[..., 0]


def _param(params, key, default):
    return float(params.get(key, default))


def kuramoto(params=None, check=True) -> ModelSpec:
    """phi' = omega(x) + K * coupling of sin(psi - phi); phases in radians."""
    p = dict(params or {})
    omega = _param(p, "omega", 0.0)
    amp = _param(p, "omega_amp", 0.0)
    k = _param(p, "K", 1.0)
    p.update(omega=omega, omega_amp=amp, K=k)

    g = Kernel(
        lambda t, psi, phi: k * np.sin(psi - phi),
        lambda t, psi: np.concatenate([np.sin(psi), np.cos(psi)], axis=-1),
        lambda t, mom, phi: k * (mom[..., :1] * np.cos(phi) - mom[..., 1:] * np.sin(phi)),
        name="sin")

    def h(t, x, phi):
        w = omega + amp * np.cos(2 * np.pi * _x0(x))
        return np.asarray(w)[..., None] + np.zeros_like(phi)

    return ModelSpec("kuramoto", 1, (g,), h, None, p, CircleMetric(2 * np.pi), period=2 * np.pi)


def sis(params=None, check=True) -> ModelSpec:
    """(S, I) with mass-action infection beta0 * I_neighbour * S and recovery gamma0 * I."""
    p = dict(params or {})
    beta0 = _param(p, "beta0", 2.0)
    gamma0 = _param(p, "gamma0", 0.5)
    n_tot = _param(p, "N", 1.0)
    p.update(beta0=beta0, gamma0=gamma0, N=n_tot)
    if check:
        if beta0 < 0 or gamma0 < 0:
            raise ParameterError("SIS rates must satisfy beta0 >= 0 and gamma0 >= 0")
        if n_tot <= 0:
            raise ParameterError("SIS population must satisfy N > 0")
    sign = np.array([-1.0, 1.0])

    g = Kernel(
        lambda t, psi, phi: (beta0 * psi[..., 1] * phi[..., 0])[..., None] * sign,
        lambda t, psi: psi[..., 1:2],
        lambda t, mom, phi: (beta0 * mom[..., 0] * phi[..., 0])[..., None] * sign,
        name="infection")

    def h(t, x, phi):
        return (gamma0 * phi[..., 1])[..., None] * -sign

    normals = np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0], [-1.0, -1.0]])
    offsets = np.array([0.0, 0.0, n_tot, -n_tot])
    poly = InvariantPolytope(normals, offsets, np.zeros(2), np.full(2, n_tot))
    return ModelSpec("sis", 2, (g,), h, poly, p, conserved=np.ones(2))


def seirs(params=None, check=True) -> ModelSpec:
    """(S, E, I, R) with births Lambda(x), deaths d_i and linear transition rates."""
    p = dict(params or {})
    lam0 = _param(p, "Lambda", 1.0)
    lam_amp = _param(p, "Lambda_amp", 0.0)
    d = np.broadcast_to(np.asarray(p.get("d", 1.0), dtype=float), (4,)).copy()
    beta0 = _param(p, "beta0", 2.0)
    iota0 = _param(p, "iota0", 1.0)
    gamma0 = _param(p, "gamma0", 0.5)
    sigma0 = _param(p, "sigma0", 0.2)
    d_min = float(d.min())
    sup_lambda = lam0 * (1.0 + abs(lam_amp))
    if check:
        if np.any(d <= 0):
            raise ParameterError("SEIRS death rates must satisfy d_i > 0")
        if min(beta0, iota0, gamma0, sigma0, lam0) < 0:
            raise ParameterError("SEIRS rates must be nonnegative")
        if abs(lam_amp) > 1:
            raise ParameterError("SEIRS influx must satisfy |Lambda_amp| <= 1 so Lambda(x) >= 0")
    m_bound = sup_lambda / d_min
    if "M" in p and p["M"] is not None:
        given = float(p["M"])
        if check and given < m_bound * (1 - 1e-12):
            raise ParameterError(
                f"SEIRS bound must satisfy M >= sup Lambda/d = {m_bound!r} (got {given!r})")
        m_bound = given
    p.update(Lambda=lam0, Lambda_amp=lam_amp, d=tuple(d.tolist()), beta0=beta0, iota0=iota0,
             gamma0=gamma0, sigma0=sigma0, M=m_bound)
    sign = np.array([-1.0, 1.0, 0.0, 0.0])

    g = Kernel(
        lambda t, psi, phi: (beta0 * psi[..., 2] * phi[..., 0])[..., None] * sign,
        lambda t, psi: psi[..., 2:3],
        lambda t, mom, phi: (beta0 * mom[..., 0] * phi[..., 0])[..., None] * sign,
        name="infection")

    def h(t, x, phi):
        lam = lam0 * (1.0 + lam_amp * np.cos(2 * np.pi * _x0(x)))
        s, e, i, r = (phi[..., k] for k in range(4))
        out = np.stack([
            lam + sigma0 * r - d[0] * s,
            -iota0 * e - d[1] * e,
            iota0 * e - gamma0 * i - d[2] * i,
            gamma0 * i - sigma0 * r - d[3] * r,
        ], axis=-1)
        return out

    normals = np.vstack([-np.eye(4), np.ones((1, 4))])
    offsets = np.concatenate([np.zeros(4), [m_bound]])
    poly = InvariantPolytope(normals, offsets, np.zeros(4), np.full(4, m_bound))
    return ModelSpec("seirs", 4, (g,), h, poly, p)


def lotka_volterra(params=None, check=True) -> ModelSpec:
    """Prey/predator per patch with linear dispersal W_l(u) = w_l * u, 0 <= w_l <= 1."""
    p = dict(params or {})
    alpha = _param(p, "alpha", 1.0)
    beta = _param(p, "beta", 1.0)
    gamma = _param(p, "gamma", 0.5)
    iota = _param(p, "iota", 0.5)
    sigma = _param(p, "sigma", 0.5)
    theta = _param(p, "theta", 0.5)
    w1 = _param(p, "W1", 0.5)
    w2 = _param(p, "W2", 0.5)
    lam1 = _param(p, "Lambda1", max(1.0, alpha / beta) if beta > 0 else 1.0)
    lam2 = _param(p, "Lambda2", max(1.0, (-iota + sigma * lam1) / theta) if theta > 0 else 1.0)
    p.update(alpha=alpha, beta=beta, gamma=gamma, iota=iota, sigma=sigma, theta=theta,
             W1=w1, W2=w2, Lambda1=lam1, Lambda2=lam2)
    if check:
        if min(alpha, beta, gamma, iota, sigma, theta) < 0:
            raise ParameterError("Lotka-Volterra rates must be nonnegative")
        if not (0 <= w1 <= 1 and 0 <= w2 <= 1):
            raise ParameterError("dispersal must satisfy 0 <= W(u) <= u, i.e. 0 <= W1, W2 <= 1")
        if lam1 <= 0 or lam2 <= 0:
            raise ParameterError("Lotka-Volterra box must satisfy Lambda1, Lambda2 > 0")
        if lam1 < alpha / beta * (1 - 1e-12):
            raise ParameterError("Lotka-Volterra box must satisfy Lambda1 >= alpha/beta")
        if lam2 < (-iota + sigma * lam1) / theta * (1 + 1e-12) - 1e-15:
            raise ParameterError(
                "Lotka-Volterra box must satisfy Lambda2 >= -iota/theta + (sigma/theta)*Lambda1")
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])

    g1 = Kernel(
        lambda t, psi, phi: (w1 * (psi[..., 0] - phi[..., 0]))[..., None] * e1,
        lambda t, psi: np.stack([psi[..., 0], np.ones_like(psi[..., 0])], axis=-1),
        lambda t, mom, phi: (w1 * (mom[..., 0] - mom[..., 1] * phi[..., 0]))[..., None] * e1,
        name="prey dispersal")
    g2 = Kernel(
        lambda t, psi, phi: (w2 * (psi[..., 1] - phi[..., 1]))[..., None] * e2,
        lambda t, psi: np.stack([psi[..., 1], np.ones_like(psi[..., 1])], axis=-1),
        lambda t, mom, phi: (w2 * (mom[..., 0] - mom[..., 1] * phi[..., 1]))[..., None] * e2,
        name="predator dispersal")

    def h(t, x, phi):
        u, v = phi[..., 0], phi[..., 1]
        return np.stack([u * (alpha - beta * u - gamma * v),
                         v * (-iota + sigma * u - theta * v)], axis=-1)

    poly = InvariantPolytope.box([0.0, 0.0], [lam1, lam2])
    return ModelSpec("lotka_volterra", 2, (g1, g2), h, poly, p)


def hegselmann_krause(params=None, check=True) -> ModelSpec:
    """Opinions in [-Lambda, Lambda]^d attracted by G(|psi - phi|)(psi - phi).

    G is constant ("constant", weight G0) or the tent max(0, 1 - r/R) ("tent").
    """
    p = dict(params or {})
    dim = int(p.get("dim", 1))
    lam = _param(p, "Lambda", 1.0)
    shape = str(p.get("G", "constant"))
    g0 = _param(p, "G0", 1.0)
    radius = _param(p, "R", 0.5)
    p.update(dim=dim, Lambda=lam, G=shape, G0=g0, R=radius)
    if check:
        if dim < 1:
            raise ParameterError("opinion dimension must satisfy dim >= 1")
        if lam <= 0:
            raise ParameterError("opinion cube must satisfy Lambda > 0")
        if g0 < 0:
            raise ParameterError("interaction weight must satisfy G0 >= 0")
    if shape == "constant":
        g = Kernel(
            lambda t, psi, phi: g0 * (psi - phi),
            lambda t, psi: np.concatenate([psi, np.ones(psi.shape[:-1] + (1,))], axis=-1),
            lambda t, mom, phi: g0 * (mom[..., :-1] - mom[..., -1:] * phi),
            name="consensus")
    elif shape == "tent":
        if check and radius <= 0:
            raise ParameterError("confidence radius must satisfy R > 0")

        def func(t, psi, phi):
            diff = psi - phi
            r = np.abs(diff).sum(axis=-1, keepdims=True)
            return g0 * np.maximum(0.0, 1.0 - r / radius) * diff

        g = Kernel(func, name="bounded confidence")
    else:
        raise ParameterError(f"unknown interaction shape G = {shape!r}")

    def h(t, x, phi):
        return np.zeros_like(phi)

    poly = InvariantPolytope.box(np.full(dim, -lam), np.full(dim, lam))
    return ModelSpec("hegselmann_krause", dim, (g,), h, poly, p)


_BUILTIN = {
    "kuramoto": kuramoto,
    "sis": sis,
    "seirs": seirs,
    "lotka_volterra": lotka_volterra,
    "hegselmann_krause": hegselmann_krause,
}
_ALIASES = {"lv": "lotka_volterra", "hk": "hegselmann_krause"}
MODEL_NAMES = tuple(_BUILTIN)


def builtin_model(name: str, params=None, check: bool = True) -> ModelSpec:
    key = _ALIASES.get(name, name)
    if key not in _BUILTIN:
        raise KeyError(f"unknown model {name!r}; known: {', '.join(_BUILTIN)}")
    return _BUILTIN[key](params, check)


def custom_model(name, r2, kernels, h, polytope=None, params=None, period=None) -> ModelSpec:
    metric = CircleMetric(period) if period else L1Metric()
    return ModelSpec(name, r2, tuple(kernels), h, polytope, dict(params or {}), metric, period=period)


# ---------------------------------------------------------------------------
# coupling tables and the discrete Vlasov operator


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Particle states at one instant: states[i, j] is particle j of cell i."""

    partition: object
    a_weights: np.ndarray
    states: np.ndarray

    @property
    def n(self) -> int:
        return self.states.shape[1]


def coupling_counts(dgm, partition) -> np.ndarray:
    """counts[i, p] = number of DGM atoms of cell i lying in cell p."""
    if dgm.partition != partition:
        raise ValueError("DGM and ensemble partitions differ")
    m = len(partition)
    counts = np.zeros((m, m))
    for i, y in enumerate(dgm.atoms):
        if len(y) == 0:
            continue
        cells = partition.locate(y)
        np.add.at(counts[i], cells, 1.0)
    return counts


def coupling_weights(dgm, partition, a_weights, n_particles: int) -> np.ndarray:
    """W[i, p] = (b_i / n_dgm) * #{j : y_ij in A_p} * (a_p / n_particles)."""
    counts = coupling_counts(dgm, partition)
    b = np.asarray(dgm.weights, dtype=float)
    return (b / dgm.n)[:, None] * counts * (np.asarray(a_weights, dtype=float) / n_particles)[None, :]


def vlasov_operator(model: ModelSpec, dgms, snapshot: Snapshot, t: float, cell: int, phi) -> np.ndarray:
    """V at (t, x_i, phi), written out as the literal double sum over DGM atoms
    and particles (no precomputed tables)."""
    part = snapshot.partition
    m = len(part)
    if not 0 <= cell < m:
        raise IndexError(f"cell index {cell} out of range 0..{m - 1}")
    phi = np.asarray(phi, dtype=float).reshape(model.r2)
    if not np.all(np.isfinite(phi)):
        raise ValueError("phi must be finite")
    if len(dgms) != model.r:
        raise ValueError(f"model needs {model.r} DGMs, got {len(dgms)}")
    n = snapshot.n
    total = np.zeros(model.r2)
    for kernel, dgm in zip(model.kernels, dgms):
        if dgm.partition != part:
            raise ValueError("DGM and snapshot partitions differ")
        y = dgm.atoms[cell]
        if len(y) == 0:
            continue
        b = dgm.weights[cell]
        owner = part.locate(y)
        for j in range(len(y)):
            p = owner[j]
            inner = np.zeros(model.r2)
            for q in range(n):
                inner += kernel(t, snapshot.states[p, q], phi)
            total += (b / dgm.n) * (snapshot.a_weights[p] / n) * inner
    return total + model.intrinsic(t, part.representatives[cell], phi)


def flow_lipschitz_bound(model: ModelSpec, dgms, a_weights, samples: int = 2000, seed: int = 0) -> float:
    """L1 = ||nu|| * sum_l Lip(g_l) * ||eta^l|| + Lip(h), with sampled Lipschitz constants."""
    rng = np.random.default_rng(seed)
    nu_norm = float(np.max(a_weights))
    total = 0.0
    for kernel, dgm in zip(model.kernels, dgms):
        total += nu_norm * kernel_lipschitz(model, kernel, samples, rng) * float(np.max(dgm.weights))
    reps = dgms[0].partition.representatives if dgms else np.zeros((1, 1))
    return total + field_lipschitz(model, reps, samples, rng)


def _pairs(model, k, rng):
    a = model.sample_states(k, rng)
    scale = np.max(model.state_box()[1] - model.state_box()[0])
    close = a + rng.normal(size=a.shape) * scale * rng.choice([1e-1, 1e-3, 1e-5], size=(k, 1))
    if model.polytope is not None:
        close = model.polytope.project(close)
    far = model.sample_states(k, rng)
    return np.vstack([a, a]), np.vstack([close, far])


def kernel_lipschitz(model: ModelSpec, kernel: Kernel, samples: int = 2000, rng=None) -> float:
    """Sampled Lipschitz constant of (psi, phi) -> g(psi, phi) in the l1 norm."""
    rng = np.random.default_rng(0) if rng is None else rng
    psi1, psi2 = _pairs(model, samples, rng)
    phi1, phi2 = _pairs(model, samples, rng)
    num = np.abs(kernel(0.0, psi1, phi1) - kernel(0.0, psi2, phi2)).sum(axis=-1)
    den = np.abs(psi1 - psi2).sum(axis=-1) + np.abs(phi1 - phi2).sum(axis=-1)
    ok = den > 1e-14
    return float(np.max(num[ok] / den[ok])) if ok.any() else 0.0


def field_lipschitz(model: ModelSpec, points, samples: int = 2000, rng=None) -> float:
    """Sampled Lipschitz constant of phi -> h(t, x, phi), max over the given x."""
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    points = np.atleast_2d(points)
    for x in points[: min(len(points), 16)]:
        phi1, phi2 = _pairs(model, samples, rng)
        num = np.abs(model.intrinsic(0.0, x, phi1) - model.intrinsic(0.0, x, phi2)).sum(axis=-1)
        den = np.abs(phi1 - phi2).sum(axis=-1)
        ok = den > 1e-14
        if ok.any():
            worst = max(worst, float(np.max(num[ok] / den[ok])))
    return worst


# ---------------------------------------------------------------------------
# Bony boundary check


@dataclass(frozen=True)
class BonyReport:
    model: str
    max_flux: float
    worst_face: int
    worst_cell: int
    worst_point: tuple
    samples: int
    skipped: bool = False

    @property
    def passed(self) -> bool:
        return self.skipped or self.max_flux <= BONY_TOL

    def summary(self) -> str:
        if self.skipped:
            return f"{self.model}: no boundary, check skipped"
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.model}: max outward flux {self.max_flux:.3e} on face {self.worst_face} "
                f"at {list(self.worst_point)} (cell {self.worst_cell}) -> {status}")


def bony_check(model: ModelSpec, dgms, ensemble_bounds=1.0, samples: int = 200,
               n_particles: int = 4, seed: int = 0) -> BonyReport:
    """Largest V . normal over sampled boundary points and ensembles supported in Y.

    Ensembles mix random interior states with ensembles concentrated at one
    vertex of Y or at the boundary point itself; cell masses a_p are drawn
    from {0, a_max} and uniformly from [0, a_max] with a_max = ensemble_bounds.
    This samples the condition, it does not prove it.
    """
    poly = model.polytope
    if poly is None:
        return BonyReport(model.name, float("-inf"), -1, -1, (), 0, skipped=True)
    rng = np.random.default_rng(seed)
    part = dgms[0].partition
    m = len(part)
    a_max = np.broadcast_to(np.asarray(ensemble_bounds, dtype=float), (m,))
    verts = poly.vertices()
    tables = None
    best = (-np.inf, -1, -1, ())
    for face, (normal, offset) in enumerate(zip(poly.normals, poly.offsets)):
        on_face = verts[np.abs(verts @ normal - offset) <= 1e-9]
        if len(on_face) == 0:
            continue
        mix = rng.dirichlet(np.ones(len(on_face)), size=samples) @ on_face
        points = np.vstack([on_face, on_face.mean(axis=0, keepdims=True), mix])
        for k, phi in enumerate(points):
            choice = k % 4
            if choice == 0:
                states = poly.sample(m * n_particles, rng).reshape(m, n_particles, model.r2)
            elif choice == 1:
                v = verts[rng.integers(len(verts))]
                states = np.broadcast_to(v, (m, n_particles, model.r2)).copy()
            elif choice == 2:
                states = np.broadcast_to(phi, (m, n_particles, model.r2)).copy()
            else:
                states = np.stack([poly.sample(n_particles, rng) if rng.random() < 0.5 else
                                   np.broadcast_to(verts[rng.integers(len(verts))], (n_particles, model.r2))
                                   for _ in range(m)])
            if rng.random() < 0.5:
                a = a_max * rng.integers(0, 2, size=m)
            else:
                a = a_max * rng.random(m)
            tables = [coupling_weights(d, part, a, n_particles) for d in dgms]
            cells = np.arange(m)
            targets = np.broadcast_to(phi, (m, model.r2)).copy()
            v = model.intrinsic(0.0, part.representatives, targets)
            for kernel, w in zip(model.kernels, tables):
                v = v + kernel.aggregate(0.0, w, states, cells, targets)
            flux = v @ normal
            i = int(np.argmax(flux))
            if flux[i] > best[0]:
                best = (float(flux[i]), face, i, tuple(phi.tolist()))
    return BonyReport(model.name, best[0], best[1], best[2], best[3], samples)
