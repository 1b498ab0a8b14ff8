"""Particle ensembles: initial discretization, the coupled ODE system, RK4
integration, frozen-ensemble characteristics and the Picard fixed-point solver."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dgm import cell_average
from .measures import DiscreteMeasure, FiberFunction, MeasureDescriptor, d_infinity, empirical_approximation
from .models import ModelSpec, coupling_weights

NORMALIZATION_TOL = 1e-9
CLIP_TOL = 1e-6
IGNORE_TOL = 1e-12


class InvarianceError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class TimeGrid:
    T: float
    dt: float
    stride: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if not (self.T >= 0 and math.isfinite(self.T)):
            raise ValueError("T must be nonnegative")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")
        steps = round(self.T / self.dt)
        if abs(steps * self.dt - self.T) > 1e-9 * max(1.0, self.T):
            raise ValueError(f"T/dt = {self.T / self.dt!r} is not an integer")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    def step_times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.steps + 1)

    def stored_steps(self) -> np.ndarray:
        idx = np.arange(0, self.steps + 1, self.stride)
        if idx[-1] != self.steps:
            idx = np.append(idx, self.steps)
        return idx

    def halved(self) -> "TimeGrid":
        return TimeGrid(self.T, self.dt / 2, self.stride * 2)


@dataclass(frozen=True, eq=False)
class EnsembleTrajectory:
    """states[k, i, j] is particle j of cell i at times[k]."""

    partition: object
    a_weights: np.ndarray
    times: np.ndarray
    states: np.ndarray
    metric: object = None
    max_violation: float = 0.0

    def __post_init__(self):
        for name in ("a_weights", "times", "states"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.states.shape[2]

    @property
    def r2(self) -> int:
        return self.states.shape[3]

    def time_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-12 * max(1.0, abs(t)):
            raise ValueError(f"t = {t!r} is not on the stored time grid")
        return k

    def at(self, t: float) -> np.ndarray:
        """Particle states at time t, linearly interpolated between stored times."""
        times = self.times
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise ValueError(f"t = {t!r} outside the stored interval [{times[0]}, {times[-1]}]")
        k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2)) \
            if len(times) > 1 else 0
        if len(times) == 1:
            return self.states[0]
        t0, t1 = times[k], times[k + 1]
        w = min(max((t - t0) / (t1 - t0), 0.0), 1.0)
        return (1 - w) * self.states[k] + w * self.states[k + 1]

    def final(self) -> np.ndarray:
        return self.states[-1]


# ---------------------------------------------------------------------------
# initial discretization


def discretize_initial(nu0: Callable[[np.ndarray], MeasureDescriptor], partition, n: int,
                       rule: str = "quantile"):
    """Cell masses a_i and n particle states per cell approximating nu0.

    a_i is the mu_X-average of the fiber mass over cell i (the value at the
    representative on null cells); particles are the n-point deterministic
    approximation of the normalized fiber at the representative.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    m = len(partition)

    def mass(x):
        return float(nu0(np.atleast_1d(np.asarray(x, dtype=float))).mass)

    a = np.array([cell_average(mass, partition, i) for i in range(m)])
    total = float(np.dot(a, partition.masses))
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise ValueError(f"initial measure must have total mass 1 against mu_X, got {total!r}")
    blocks = []
    dim = None
    for i in range(m):
        fiber = nu0(np.asarray(partition.representatives[i], dtype=float))
        if fiber.mass > 0:
            pts = empirical_approximation(fiber.normalized(), n, rule).atoms
            dim = pts.shape[1]
            blocks.append(pts)
        else:
            blocks.append(None)
    if dim is None:
        raise ValueError("initial measure has no mass at any representative")
    fill = next(b for b in blocks if b is not None)
    # cells with empty fibers carry a = 0; their particles are placeholders
    states = np.stack([b if b is not None else fill for b in blocks])
    return a, states


def initial_measure(partition, a_weights, states) -> FiberFunction:
    n = states.shape[1]
    return FiberFunction(partition, [DiscreteMeasure(states[i], np.full(n, a_weights[i] / n))
                                     for i in range(len(partition))])


# ---------------------------------------------------------------------------
# the coupled ODE system


@dataclass(frozen=True, eq=False)
class Rhs:
    """dPhi/dt for all particles; Phi has shape (m, n, r2)."""

    model: ModelSpec
    partition: object
    a_weights: np.ndarray
    n: int
    tables: tuple  # one (m, m) coupling-weight matrix per DGM
    links: tuple   # one (m, m) boolean "cell i sees cell p" matrix per DGM

    def __call__(self, t: float, phi: np.ndarray) -> np.ndarray:
        return self.velocity(t, phi, phi)

    def velocity(self, t: float, sources: np.ndarray, phi: np.ndarray,
                 cells: np.ndarray | None = None) -> np.ndarray:
        """V(t, x_cell, phi) with the coupling read from the ensemble ``sources``.

        ``phi`` is either (m, n, r2) (one block per cell) or (k, r2) with
        matching ``cells``.
        """
        r2 = self.model.r2
        if cells is None:
            shape = phi.shape
            targets = phi.reshape(-1, r2)
            cells = np.repeat(np.arange(len(self.partition)), shape[1])
        else:
            shape = phi.shape
            targets = phi.reshape(-1, r2)
        out = self.model.intrinsic(t, self.partition.representatives[cells], targets)
        for kernel, w in zip(self.model.kernels, self.tables):
            out = out + kernel.aggregate(t, w, sources, cells, targets)
        return out.reshape(shape)


def build_rhs(model: ModelSpec, dgms, a_weights, n: int) -> Rhs:
    """Resolve which cell each DGM atom falls in once, into coupling tables."""
    if len(dgms) != model.r:
        raise ValueError(f"model {model.name} needs {model.r} DGMs, got {len(dgms)}")
    part = dgms[0].partition
    for d in dgms:
        if d.partition != part:
            raise ValueError("all DGMs must share one partition")
    a = np.asarray(a_weights, dtype=float)
    if a.shape != (len(part),):
        raise ValueError("need one a-weight per cell")
    if np.any(a < 0):
        raise ValueError("a-weights must be nonnegative")
    tables = tuple(coupling_weights(d, part, a, n) for d in dgms)
    links = tuple(t > 0 for t in tables)
    return Rhs(model, part, a, n, tables, links)


def _check_and_project(model: ModelSpec, states: np.ndarray, projection: bool, t: float) -> float:
    if not np.all(np.isfinite(states)):
        raise InvarianceError(f"non-finite state at t = {t!r}")
    poly = model.polytope
    if poly is None:
        return 0.0
    viol = poly.violation(states)
    worst = float(viol.max())
    scale = max(1.0, float(np.max(poly.upper - poly.lower)))
    if worst <= IGNORE_TOL * scale:
        return max(worst, 0.0)
    if worst > CLIP_TOL:
        raise InvarianceError(
            f"state leaves the invariant region by {worst:.3e} at t = {t!r} "
            f"(Bony condition fails or dt is too large)")
    if projection:
        bad = viol > IGNORE_TOL * scale
        states[bad] = poly.project(states[bad])
    return worst


def _rk4_step(f, t, y, dt):
    k1 = f(t, y)
    k2 = f(t + dt / 2, y + dt / 2 * k1)
    k3 = f(t + dt / 2, y + dt / 2 * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(rhs: Rhs, initial_states, grid: TimeGrid, projection: bool = True) -> EnsembleTrajectory:
    """Classical fixed-step RK4 for the particle system."""
    y = np.array(initial_states, dtype=float)
    m = len(rhs.partition)
    if y.shape != (m, rhs.n, rhs.model.r2):
        raise ValueError(f"initial states must have shape {(m, rhs.n, rhs.model.r2)}, got {y.shape}")
    model = rhs.model
    if model.polytope is not None:
        v0 = float(model.polytope.violation(y).max())
        if v0 > CLIP_TOL:
            raise InvarianceError(f"initial states lie outside the invariant region by {v0:.3e}")
    worst = _check_and_project(model, y, projection, 0.0)
    stored = set(grid.stored_steps().tolist())
    times, states = [0.0], [y.copy()]
    for s in range(grid.steps):
        t = s * grid.dt
        y = _rk4_step(rhs, t, y, grid.dt)
        worst = max(worst, _check_and_project(model, y, projection, t + grid.dt))
        if s + 1 in stored:
            times.append((s + 1) * grid.dt)
            states.append(y.copy())
    return EnsembleTrajectory(rhs.partition, rhs.a_weights, np.array(times), np.stack(states),
                              model.metric, worst)


def ensemble_measure(traj: EnsembleTrajectory, t: float) -> FiberFunction:
    """Per cell the measure (a_i/n) sum_j delta at the particle states at time t."""
    k = traj.time_index(t)
    return initial_measure(traj.partition, traj.a_weights, traj.states[k])


def trajectory_distance(traj1: EnsembleTrajectory, traj2: EnsembleTrajectory, t: float,
                        threads: int | None = None) -> float:
    """d_infinity between the two empirical measures at time t."""
    return d_infinity(ensemble_measure(traj1, t), ensemble_measure(traj2, t), traj1.metric,
                      threads=threads)


# ---------------------------------------------------------------------------
# characteristics with a frozen ensemble


def _frozen_rhs(rhs: Rhs, frozen: EnsembleTrajectory, cells):
    def f(t, phi):
        return rhs.velocity(t, frozen.at(t), phi, cells)
    return f


def flow_map(model: ModelSpec, dgms, frozen: EnsembleTrajectory, cell: int, t_from: float,
             t_to: float, phi0, dt: float | None = None) -> np.ndarray:
    """Solve dphi/dt = V(t, x_cell, phi) from t_from to t_to with the ensemble
    read from ``frozen``; t_to < t_from integrates backwards.

    ``phi0`` may be one state (r2,) or a batch (k, r2).
    """
    rhs = build_rhs(model, dgms, frozen.a_weights, frozen.n)
    phi = np.array(phi0, dtype=float)
    single = phi.ndim == 1
    phi = np.atleast_2d(phi)
    if phi.shape[1] != model.r2:
        raise ValueError(f"phi0 must have {model.r2} components")
    lo, hi = frozen.times[0], frozen.times[-1]
    if min(t_from, t_to) < lo - 1e-12 or max(t_from, t_to) > hi + 1e-12:
        raise ValueError("frozen ensemble does not span the requested interval")
    if not 0 <= cell < len(rhs.partition):
        raise IndexError(f"cell index {cell} out of range")
    span = t_to - t_from
    if span != 0.0:
        base = dt if dt is not None else (np.min(np.diff(frozen.times)) if len(frozen.times) > 1 else abs(span))
        steps = max(1, int(math.ceil(abs(span) / base - 1e-9)))
        h = span / steps
        cells = np.full(len(phi), cell)
        f = _frozen_rhs(rhs, frozen, cells)
        for s in range(steps):
            t = t_from + s * h
            phi = _rk4_step(f, t, phi, h)
            _check_and_project(model, phi, True, t + h)
    return phi[0] if single else phi


def _push_forward(rhs: Rhs, frozen: EnsembleTrajectory, initial: np.ndarray,
                  grid: TimeGrid) -> EnsembleTrajectory:
    """All particles moved along the characteristics of the frozen ensemble."""
    m, n, r2 = initial.shape
    cells = np.repeat(np.arange(m), n)
    f = _frozen_rhs(rhs, frozen, cells)
    y = initial.reshape(-1, r2).copy()
    stored = set(grid.stored_steps().tolist())
    times, states = [0.0], [initial.copy()]
    worst = 0.0
    for s in range(grid.steps):
        t = s * grid.dt
        y = _rk4_step(f, t, y, grid.dt)
        worst = max(worst, _check_and_project(rhs.model, y, True, t + grid.dt))
        if s + 1 in stored:
            times.append((s + 1) * grid.dt)
            states.append(y.reshape(m, n, r2).copy())
    return EnsembleTrajectory(rhs.partition, rhs.a_weights, np.array(times), np.stack(states),
                              rhs.model.metric, worst)


def coupling_bound(traj1: EnsembleTrajectory, traj2: EnsembleTrajectory) -> float:
    """Upper bound on sup_t d_infinity from matching particles one to one:
    max over cells and times of (a_i/n) * sum_j |phi_ij - phi'_ij|."""
    metric = traj1.metric
    diff = traj1.states - traj2.states
    if metric is not None and getattr(metric, "period", None):
        p = metric.period
        diff = np.abs(diff) % p
        diff = np.minimum(diff, p - diff)
    dist = np.abs(diff).sum(axis=-1)  # (K, m, n)
    per_cell = dist.sum(axis=-1) * (traj1.a_weights / traj1.n)[None, :]
    return float(per_cell.max())


@dataclass
class PicardResult:
    trajectory: EnsembleTrajectory
    iterations: int
    residuals: list = field(default_factory=list)  # exact sup over checkpoints of d_infinity
    bounds: list = field(default_factory=list)     # particle-matching upper bounds
    converged: bool = False


def picard_solve(model: ModelSpec, dgms, a_weights, initial_states, grid: TimeGrid,
                 max_iter: int = 50, tol: float = 1e-10, checkpoints: int = 5,
                 threads: int | None = None) -> PicardResult:
    """Fixed-point iteration nu^{k+1} = push-forward of nu_0 along the flow frozen at nu^k.

    Stops when the particle-matching bound on sup_t d_infinity(nu^{k+1}_t, nu^k_t)
    drops below ``tol``.  Exact d_infinity residuals are recorded at
    ``checkpoints`` evenly spaced stored times.
    """
    init = np.array(initial_states, dtype=float)
    rhs = build_rhs(model, dgms, a_weights, init.shape[1])
    store = TimeGrid(grid.T, grid.dt, 1)
    k_total = store.steps + 1
    current = EnsembleTrajectory(rhs.partition, rhs.a_weights, store.step_times(),
                                 np.broadcast_to(init, (k_total,) + init.shape), model.metric)
    check_idx = np.unique(np.linspace(0, k_total - 1, max(2, checkpoints)).round().astype(int))
    result = PicardResult(current, 0)
    for it in range(1, max_iter + 1):
        new = _push_forward(rhs, current, init, store)
        bound = coupling_bound(new, current)
        exact = max(d_infinity(initial_measure(rhs.partition, rhs.a_weights, new.states[k]),
                               initial_measure(rhs.partition, rhs.a_weights, current.states[k]),
                               model.metric, threads=threads)
                    for k in check_idx)
        result.bounds.append(bound)
        result.residuals.append(exact)
        result.iterations = it
        current = new
        if bound < tol:
            result.converged = True
            break
    idx = grid.stored_steps()
    result.trajectory = EnsembleTrajectory(rhs.partition, rhs.a_weights, current.times[idx],
                                           current.states[idx], model.metric, current.max_violation)
    if not result.converged:
        raise ConvergenceError(
            f"Picard iteration did not converge in {max_iter} iterations "
            f"(last residual bound {result.bounds[-1]:.3e})", result)
    return result


# ---------------------------------------------------------------------------
# CSV export


def _f(x) -> str:
    return format(float(x), ".17g")


def trajectory_csv(traj: EnsembleTrajectory) -> str:
    r2 = traj.r2
    rows = ["t,cell,particle," + ",".join(f"state_{k + 1}" for k in range(r2))]
    for k, t in enumerate(traj.times):
        for i in range(traj.states.shape[1]):
            for j in range(traj.n):
                rows.append(",".join([_f(t), str(i), str(j)] + [_f(v) for v in traj.states[k, i, j]]))
    return "\n".join(rows) + "\n"


def distance_csv(rows) -> str:
    """rows of (t, m, n, d_infinity)."""
    out = ["t,m,n,d_infinity"]
    for t, m, n, d in rows:
        out.append(f"{_f(t)},{int(m)},{int(n)},{_f(d)}")
    return "\n".join(out) + "\n"
