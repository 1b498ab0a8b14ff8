"""Experiment configuration and the simulate / converge / audit / distance runners."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dgm import CATALOG_NAMES, catalog, continuity_modulus, discretize_dgm
from .measures import (
    CircleMetric, Dirac, DiscreteMeasure, L1Metric, Segment, bl_distance, kr_distance,
    tv_distance,
)
from .models import MODEL_NAMES, ModelSpec, ParameterError, bony_check, builtin_model
from .solver import (
    TimeGrid, build_rhs, discretize_initial, distance_csv, ensemble_measure, integrate, trajectory_csv,
    trajectory_distance,
)
from .vertex import KINDS, make_partition, vertex_space

INITIAL_KINDS = ("default", "uniform", "dirac")
_MODEL_KEYS = {"name", "check"}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    model_name: str
    model_params: dict
    model_check: bool
    dgm_names: list
    space_kind: str
    m: int
    n: int
    T: float
    dt: float
    initial_kind: str = "default"
    initial: dict = field(default_factory=dict)
    stride: int = 100
    sweep_n: list = field(default_factory=list)
    sweep_reference: int | None = None
    sweep_times: list = field(default_factory=list)
    audit_samples: int = 200
    audit_grid: int = 32
    seed: int = 0
    rule: str = "quantile"

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.dt, self.stride)


# ---------------------------------------------------------------------------
# parsing


def _number(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        low = text.lower()
        if low in ("true", "yes", "on"):
            return True
        if low in ("false", "no", "off"):
            return False
        return text


def _value(text: str):
    parts = [p for p in text.split(",")]
    if len(parts) > 1:
        return tuple(_number(p) for p in parts if p.strip())
    return _number(text)


def _int(raw: dict, key: str, default=None, minimum: int = 1) -> int:
    if key not in raw:
        if default is None:
            raise ConfigError(key, "missing")
        return default
    v = _number(raw[key])
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(key, f"expected an integer, got {raw[key]!r}")
    if v < minimum:
        raise ConfigError(key, f"must be at least {minimum}, got {v}")
    return v


def _float(raw: dict, key: str, default=None, positive: bool = True) -> float:
    if key not in raw:
        if default is None:
            raise ConfigError(key, "missing")
        return float(default)
    v = _number(raw[key])
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {raw[key]!r}")
    if positive and not v > 0:
        raise ConfigError(key, f"must be positive, got {v}")
    return float(v)


def _int_list(raw: dict, key: str) -> list:
    if key not in raw:
        return []
    out = []
    for p in raw[key].split(","):
        v = _number(p)
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigError(key, f"expected positive integers, got {raw[key]!r}")
        out.append(v)
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ConfigError(key, "must be strictly increasing")
    return out


def parse_config(text: str, dt_override: float | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    raw = dict(parser["experiment"])

    name = raw.get("model.name")
    if not name:
        raise ConfigError("model.name", "missing")
    try:
        probe = builtin_model(name, check=False)
    except KeyError:
        raise ConfigError("model.name", f"unknown model {name!r}; known: {', '.join(MODEL_NAMES)}") from None
    params = {}
    for key, val in raw.items():
        if key.startswith("model.") and key[6:] not in _MODEL_KEYS:
            params[key[6:]] = _value(val)
    check = _number(raw.get("model.check", "true"))
    if not isinstance(check, bool):
        raise ConfigError("model.check", "expected true or false")

    if "dgm.names" not in raw:
        raise ConfigError("dgm.names", "missing")
    dgms = [d.strip() for d in raw["dgm.names"].split(",") if d.strip()]
    for d in dgms:
        if d not in CATALOG_NAMES:
            raise ConfigError("dgm.names", f"unknown DGM {d!r}; known: {', '.join(CATALOG_NAMES)}")
    try:
        probe = builtin_model(name, params, check=False)
    except ParameterError as exc:
        raise ConfigError("model", str(exc)) from None
    if len(dgms) != probe.r:
        raise ConfigError("dgm.names", f"model {probe.name} needs {probe.r} DGMs, got {len(dgms)}")

    kind = raw.get("space.kind")
    if kind is None:
        kind = catalog(dgms[0]).space.kind
    if kind not in KINDS:
        raise ConfigError("space.kind", f"unknown vertex space {kind!r}; known: {', '.join(KINDS)}")
    for d in dgms:
        if catalog(d).space.kind != kind:
            raise ConfigError("dgm.names", f"DGM {d!r} lives on {catalog(d).space.kind}, not {kind}")

    m = _int(raw, "m")
    n = _int(raw, "n", 16)
    T = _float(raw, "T", 1.0)
    dt = dt_override if dt_override is not None else _float(raw, "dt", T / 1000)
    if not dt > 0:
        raise ConfigError("dt", "must be positive")
    try:
        TimeGrid(T, dt)
    except ValueError as exc:
        raise ConfigError("dt", str(exc)) from None

    init_kind = raw.get("initial.kind", "default")
    if init_kind not in INITIAL_KINDS:
        raise ConfigError("initial.kind", f"unknown initial condition {init_kind!r}; known: {', '.join(INITIAL_KINDS)}")
    initial = {k[8:]: _value(v) for k, v in raw.items() if k.startswith("initial.") and k != "initial.kind"}

    sweep = _int_list(raw, "sweep.n")
    reference = _int(raw, "sweep.reference", 0, minimum=0) or None
    if reference is not None and sweep and reference <= sweep[-1]:
        raise ConfigError("sweep.reference", "must exceed every entry of sweep.n")
    times = []
    if "sweep.times" in raw:
        for p in raw["sweep.times"].split(","):
            v = _number(p)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 <= v <= T:
                raise ConfigError("sweep.times", f"times must lie in [0, T], got {raw['sweep.times']!r}")
            times.append(float(v))
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("sweep.times", "must be strictly increasing")
    rule = raw.get("rule", "quantile")
    if rule not in ("quantile", "midpoint"):
        raise ConfigError("rule", f"expected quantile or midpoint, got {rule!r}")

    known = {"model.name", "model.check", "dgm.names", "space.kind", "m", "n", "T", "dt",
             "initial.kind", "output.stride", "sweep.n", "sweep.reference", "sweep.times",
             "audit.samples", "audit.grid", "seed", "rule"}
    for key in raw:
        if key not in known and not key.startswith(("model.", "initial.")):
            raise ConfigError(key, "unknown key")

    return ExperimentConfig(
        model_name=name, model_params=params, model_check=check, dgm_names=dgms,
        space_kind=kind, m=m, n=n, T=T, dt=dt, initial_kind=init_kind, initial=initial,
        stride=_int(raw, "output.stride", 100), sweep_n=sweep, sweep_reference=reference,
        sweep_times=times, audit_samples=_int(raw, "audit.samples", 200),
        audit_grid=_int(raw, "audit.grid", 32, minimum=2), seed=_int(raw, "seed", 0, minimum=0),
        rule=rule)


def load_config(path, dt_override: float | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, dt_override)


# ---------------------------------------------------------------------------
# building blocks


def build_model(cfg: ExperimentConfig, check: bool | None = None) -> ModelSpec:
    try:
        return builtin_model(cfg.model_name, cfg.model_params,
                             cfg.model_check if check is None else check)
    except ParameterError as exc:
        raise ConfigError("model", str(exc)) from None


def _vector(cfg, key, r2):
    v = cfg.initial.get(key)
    if v is None:
        raise ConfigError(f"initial.{key}", "missing")
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.size == 1:
        arr = np.full(r2, float(arr[0]))
    if arr.size != r2:
        raise ConfigError(f"initial.{key}", f"expected {r2} components")
    return arr


def default_initial_segment(model: ModelSpec):
    """A segment of states inside Y used when no initial condition is given."""
    p = model.params
    name = model.name
    if name == "kuramoto":
        return np.array([0.0]), np.array([np.pi])
    if name == "sis":
        n_tot = p["N"]
        return np.array([0.9, 0.1]) * n_tot, np.array([0.5, 0.5]) * n_tot
    if name == "seirs":
        big = p["M"]
        return np.array([0.4, 0.1, 0.1, 0.1]) * big, np.array([0.3, 0.1, 0.2, 0.1]) * big
    if name == "lotka_volterra":
        return np.array([0.2 * p["Lambda1"], 0.2 * p["Lambda2"]]), \
            np.array([0.8 * p["Lambda1"], 0.6 * p["Lambda2"]])
    lam = p["Lambda"]
    return np.full(model.r2, -0.5 * lam), np.full(model.r2, 0.5 * lam)


def initial_rule(cfg: ExperimentConfig, model: ModelSpec):
    """x -> probability descriptor on Y.  ``initial.shift`` moves the fiber by
    shift * sin(2 pi x_1) to make it vary across vertices."""
    r2 = model.r2
    if cfg.initial_kind == "dirac":
        point = _vector(cfg, "point", r2)
        lo = hi = point
    elif cfg.initial_kind == "uniform":
        lo, hi = _vector(cfg, "lo", r2), _vector(cfg, "hi", r2)
    else:
        lo, hi = default_initial_segment(model)
    shift = _vector(cfg, "shift", r2) if "shift" in cfg.initial else np.zeros(r2)

    def rule(x):
        s = shift * np.sin(2 * np.pi * float(np.asarray(x)[0]))
        if cfg.initial_kind == "dirac":
            return Dirac(tuple(lo + s), 1.0)
        return Segment(tuple(lo + s), tuple(hi + s), 1.0)

    return rule


def setup(cfg: ExperimentConfig, n: int | None = None, check: bool | None = None):
    """(model, partition, DGMs, a-weights, initial states) for particle count n."""
    n = cfg.n if n is None else n
    model = build_model(cfg, check)
    part = make_partition(vertex_space(cfg.space_kind), cfg.m)
    dgms = [discretize_dgm(catalog(d), part, n, cfg.rule) for d in cfg.dgm_names]
    try:
        a, states = discretize_initial(initial_rule(cfg, model), part, n, cfg.rule)
    except ValueError as exc:
        raise ConfigError("initial", str(exc)) from None
    if states.shape[-1] != model.r2:
        raise ConfigError("initial", f"initial states have {states.shape[-1]} components, model needs {model.r2}")
    if model.polytope is not None and model.polytope.violation(states).max() > 1e-12:
        raise ConfigError("initial", "initial states lie outside the invariant region")
    return model, part, dgms, a, states


def simulate(cfg: ExperimentConfig, n: int | None = None, grid: TimeGrid | None = None):
    model, part, dgms, a, states = setup(cfg, n)
    rhs = build_rhs(model, dgms, a, states.shape[1])
    return model, integrate(rhs, states, grid or cfg.grid)


# ---------------------------------------------------------------------------
# runners; each returns (ok, report text, {filename: content})


def _f(x) -> str:
    return format(float(x), ".17g")


def run_simulate(cfg: ExperimentConfig, check: bool = False):
    model, traj = simulate(cfg)
    masses = np.array([ensemble_measure(traj, t).masses() for t in traj.times])
    mass_drift = float(np.abs(masses - traj.a_weights[None, :]).max())
    conserved = float("nan")
    if model.conserved is not None:
        c = traj.states @ model.conserved
        conserved = float(np.abs(c - c[0]).max())
    lines = [
        f"model = {model.name}",
        f"cells = {len(traj.partition)}",
        f"particles_per_cell = {traj.n}",
        f"T = {_f(traj.times[-1])}",
        f"max_violation = {_f(max(traj.max_violation, 0.0))}",
        f"mass_drift = {_f(mass_drift)}",
    ]
    if model.conserved is not None:
        lines.append(f"conserved_drift = {_f(conserved)}")
    ok = traj.max_violation <= 1e-6 and (model.conserved is None or conserved <= 1e-12)
    if check:
        lines.append(f"status = {'PASS' if ok else 'FAIL'}")
    report = "\n".join(lines) + "\n"
    return (ok or not check), report, {"trajectory.csv": trajectory_csv(traj), "summary.txt": report}


def run_converge(cfg: ExperimentConfig, check: bool = False, threads: int | None = None):
    if not cfg.sweep_n:
        raise ConfigError("sweep.n", "missing")
    if cfg.sweep_reference is None:
        raise ConfigError("sweep.reference", "missing")
    times = cfg.sweep_times or [cfg.T]
    full = TimeGrid(cfg.T, cfg.dt, 1)
    _, ref = simulate(cfg, cfg.sweep_reference, full)
    rows = []
    for n in cfg.sweep_n:
        _, traj = simulate(cfg, n, full)
        for t in times:
            rows.append((t, cfg.m, n, trajectory_distance(traj, ref, _on_grid(full, t), threads)))
    rows.sort(key=lambda r: (r[0], r[2]))
    lines = [f"{_f(t)} m={m} n={n} d_infinity={_f(d)}" for t, m, n, d in rows]
    ok = True
    if check and len(cfg.sweep_n) > 1:
        for t in times:
            ds = [d for tt, _, _, d in rows if tt == t]
            mono = all(b <= a + 1e-12 for a, b in zip(ds, ds[1:]))
            lines.append(f"t={_f(t)} nonincreasing: {'PASS' if mono else 'FAIL'}")
            ok &= mono
    return ok, "\n".join(lines) + "\n", {"distance.csv": distance_csv(rows)}


def _on_grid(grid: TimeGrid, t: float) -> float:
    k = round(t / grid.dt)
    if abs(k * grid.dt - t) > 1e-9:
        raise ConfigError("sweep.times", f"time {t} is not a multiple of dt")
    return grid.step_times()[k]


def metric_spot_checks(metric, dim: int, rng: np.random.Generator, trials: int = 20):
    """Worst violations of symmetry, triangle inequality, identity and the
    orderings d_BL <= d_TV and d_BL <= d_KR (equal masses)."""
    def rand(k):
        return DiscreteMeasure(rng.uniform(-1, 1, size=(k, dim)), rng.uniform(0, 1, size=k))

    worst = dict(symmetry=0.0, triangle=0.0, identity=0.0, bl_le_tv=0.0, bl_le_kr=0.0)
    for _ in range(trials):
        a, b, c = rand(3), rand(4), rand(2)
        ab, ba = bl_distance(a, b, metric), bl_distance(b, a, metric)
        worst["symmetry"] = max(worst["symmetry"], abs(ab - ba))
        worst["triangle"] = max(worst["triangle"], ab - bl_distance(a, c, metric) - bl_distance(c, b, metric))
        worst["identity"] = max(worst["identity"], bl_distance(a, a, metric))
        shared = DiscreteMeasure(a.atoms, rng.uniform(0, 1, size=a.size))
        worst["bl_le_tv"] = max(worst["bl_le_tv"], bl_distance(a, shared, metric) - tv_distance(a, shared))
        b1 = b.scaled(a.total_mass / b.total_mass)
        worst["bl_le_kr"] = max(worst["bl_le_kr"], bl_distance(a, b1, metric) - kr_distance(a, b1, metric))
    return worst


def run_audit(cfg: ExperimentConfig, check: bool = True):
    lines = []
    ok = True
    try:
        build_model(cfg, check=True)
        lines.append("parameters: PASS")
    except ConfigError as exc:
        lines.append(f"parameters: FAIL ({exc})")
        ok = False
    model, part, dgms, a, _ = setup(cfg, check=False)
    a_max = float(np.max(a)) if np.max(a) > 0 else 1.0
    report = bony_check(model, dgms, a_max, cfg.audit_samples, seed=cfg.seed)
    lines.append("bony: " + report.summary())
    ok &= report.passed

    rng = np.random.default_rng(cfg.seed)
    worst = metric_spot_checks(model.metric, model.r2, rng)
    for key, val in worst.items():
        good = val <= 1e-9
        lines.append(f"metric {key}: worst {val:.3e} {'PASS' if good else 'FAIL'}")
        ok &= good

    for name in dict.fromkeys(cfg.dgm_names):
        eta = catalog(name)
        mod = continuity_modulus(eta, cfg.audit_grid)
        line = f"continuity {name} (grid {cfg.audit_grid}): {_f(mod)}"
        if name == "ring":
            h = 1.0 / cfg.audit_grid
            expected = 2 * 2 * h / (2 + h)
            good = abs(mod - expected) <= 1e-8
            line += f" expected {_f(expected)} {'PASS' if good else 'FAIL'}"
            ok &= good
        lines.append(line)
    lines.append(f"status = {'PASS' if ok else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    return ok or not check, text, {"audit.txt": text}


def run_distance(path_a, path_b, metric: str = "l1", period: float = 1.0):
    from .measures import read_measure

    mu, nu = read_measure(path_a), read_measure(path_b)
    if mu.dim != nu.dim and mu.size and nu.size:
        raise ConfigError("measure", f"dimensions differ ({mu.dim} vs {nu.dim})")
    d = CircleMetric(period) if metric == "circle" else L1Metric()
    bl = bl_distance(mu, nu, d)
    tv = tv_distance(mu, nu)
    kr = kr_distance(mu, nu, d) if abs(mu.total_mass - nu.total_mass) <= 1e-12 else float("nan")
    text = f"d_BL = {_f(bl)}\nd_KR = {_f(kr)}\nd_TV = {_f(tv)}\n"
    csv = "d_BL,d_KR,d_TV\n" + ",".join(_f(v) for v in (bl, kr, tv)) + "\n"
    return True, text, {"distance.csv": csv}
