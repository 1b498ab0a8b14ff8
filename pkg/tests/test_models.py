import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vlasov_dgm.dgm import catalog, discretize_dgm
from vlasov_dgm.models import (
    MODEL_NAMES, InvariantPolytope, ParameterError, Snapshot, bony_check, builtin_model,
    coupling_counts, coupling_weights, custom_model, flow_lipschitz_bound, kernel_lipschitz,
    vlasov_operator, zero_kernel,
)
from vlasov_dgm.solver import build_rhs
from vlasov_dgm.vertex import make_partition

# a DGM pairing per model that exercises both atomic and spread fibers
PAIRINGS = {
    "kuramoto": ("ring",),
    "sis": ("tent",),
    "seirs": ("binary_tree",),
    "lotka_volterra": ("tent", "binary_tree"),
    "hegselmann_krause": ("circle_graphop",),
}


def setup(name, m=4, n_dgm=3, params=None):
    model = builtin_model(name, params)
    dgms = []
    part = None
    for dname in PAIRINGS[name]:
        eta = catalog(dname)
        part = part or make_partition(eta.space, m)
        dgms.append(discretize_dgm(eta, part, n_dgm))
    return model, dgms, part


def random_snapshot(model, part, n, rng):
    states = model.polytope.sample(len(part) * n, rng).reshape(len(part), n, model.r2) \
        if model.polytope is not None else rng.uniform(0, 2 * np.pi, (len(part), n, model.r2))
    return Snapshot(part, rng.uniform(0.2, 1.5, len(part)), states)


# -- kernels and fields ---------------------------------------------------------

def test_kuramoto_kernel_is_sine_of_difference():
    model = builtin_model("kuramoto", {"K": 1.5})
    g = model.kernels[0]
    psi, phi = np.array([[0.3], [2.0]]), np.array([[1.1], [-0.4]])
    assert g(0.0, psi, phi) == pytest.approx(1.5 * np.sin(psi - phi))
    assert model.period == pytest.approx(2 * np.pi)
    assert model.polytope is None


def test_sis_no_infection_without_infected_neighbours():
    g = builtin_model("sis").kernels[0]
    assert g(0.0, np.array([0.7, 0.0]), np.array([0.4, 0.6])).tolist() == [0.0, 0.0]
    # beta0 * I_psi * S_phi moves mass from S to I
    assert g(0.0, np.array([0.5, 0.5]), np.array([0.4, 0.6])) == pytest.approx([-0.4, 0.4])


def test_lv_without_dispersal_decouples():
    model = builtin_model("lv", {"W1": 0.0, "W2": 0.0})
    rng = np.random.default_rng(1)
    psi, phi = rng.uniform(0, 1, (10, 2)), rng.uniform(0, 1, (10, 2))
    for g in model.kernels:
        assert np.all(g(0.0, psi, phi) == 0.0)


def test_hk_tent_vanishes_beyond_radius():
    g = builtin_model("hk", {"G": "tent", "R": 0.5}).kernels[0]
    assert g(0.0, np.array([0.6]), np.array([0.0])).tolist() == [0.0]
    assert g(0.0, np.array([0.25]), np.array([0.0])) == pytest.approx([0.125])
    assert not g.separable


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_separable_form_matches_pairwise(name):
    model = builtin_model(name)
    rng = np.random.default_rng(7)
    psi = model.sample_states(12, rng)
    phi = model.sample_states(5, rng)
    for g in model.kernels:
        if not g.separable:
            continue
        direct = g(0.0, psi[None, :, :], phi[:, None, :]).sum(axis=1)
        mom = g.features(0.0, psi).sum(axis=0)
        assert g.combine(0.0, mom[None, :], phi) == pytest.approx(direct, abs=1e-12)


def test_seirs_field_at_zero_is_influx():
    model = builtin_model("seirs", {"Lambda": 0.8, "Lambda_amp": 0.5})
    v = model.intrinsic(0.0, np.array([0.0]), np.zeros(4))
    assert v == pytest.approx([1.2, 0, 0, 0])
    assert model.polytope.offsets[-1] == pytest.approx(1.2)


# -- polytopes ----------------------------------------------------------------

def test_box_polytope():
    box = InvariantPolytope.box([0.0, -1.0], [1.0, 1.0])
    assert box.is_box
    assert box.contains(np.array([[0.5, 0.0], [1.1, 0.0]])).tolist() == [True, False]
    assert box.project(np.array([[1.5, -3.0]])).tolist() == [[1.0, -1.0]]
    assert len(box.vertices()) == 4


def test_simplex_projection_lands_inside():
    poly = builtin_model("seirs").polytope
    rng = np.random.default_rng(3)
    pts = poly.sample(50, rng) + rng.normal(scale=1e-3, size=(50, 4))
    proj = poly.project(pts)
    assert np.all(poly.violation(proj) <= 1e-10)
    assert len(poly.vertices()) == 5


def test_sis_polytope_is_a_segment():
    poly = builtin_model("sis", {"N": 2.0}).polytope
    assert sorted(map(tuple, poly.vertices())) == [(0.0, 2.0), (2.0, 0.0)]
    assert poly.contains(np.array([[1.0, 1.0], [1.0, 0.5]]), tol=1e-12).tolist() == [True, False]


# -- coupling tables and the operator ---------------------------------------------

def test_coupling_counts_ring():
    part = make_partition(catalog("ring").space, 5)
    dgm = discretize_dgm(catalog("ring"), part, 3)
    assert np.array_equal(coupling_counts(dgm, part), 3 * np.eye(5))
    w = coupling_weights(dgm, part, np.full(5, 0.5), 4)
    # b / n_dgm * count * a / n = 2/3 * 3 * 0.5/4
    assert w == pytest.approx(0.25 * np.eye(5))


def test_uniform_kuramoto_phases_give_natural_frequency():
    model, dgms, part = setup("kuramoto", m=4, params={"omega": 0.7})
    n = 6
    phases = 2 * np.pi * np.arange(n) / n
    snap = Snapshot(part, np.ones(4), np.broadcast_to(phases[:, None], (4, n, 1)).copy())
    for i in range(4):
        assert vlasov_operator(model, dgms, snap, 0.0, i, [1.3]) == pytest.approx([0.7], abs=1e-14)


def test_sis_without_infected_only_recovers():
    model, dgms, part = setup("sis")
    rng = np.random.default_rng(0)
    states = np.zeros((4, 3, 2))
    states[..., 0] = 1.0
    snap = Snapshot(part, rng.uniform(0.5, 1.5, 4), states)
    v = vlasov_operator(model, dgms, snap, 0.0, 2, [0.6, 0.4])
    assert v == pytest.approx([0.2, -0.2])


def test_hk_consensus_state_is_stationary():
    model, dgms, part = setup("hegselmann_krause")
    snap = Snapshot(part, np.ones(4), np.full((4, 5, 1), 0.3))
    for i in range(4):
        assert vlasov_operator(model, dgms, snap, 0.0, i, [0.3]).tolist() == [0.0]


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_operator_matches_tabulated_rhs(name):
    # literal double sum versus precomputed coupling tables
    model, dgms, part = setup(name, m=6, n_dgm=4)
    rng = np.random.default_rng(11)
    n = 5
    snap = random_snapshot(model, part, n, rng)
    rhs = build_rhs(model, dgms, snap.a_weights, n)
    fast = rhs(0.3, snap.states)
    for i in range(len(part)):
        for j in range(n):
            slow = vlasov_operator(model, dgms, snap, 0.3, i, snap.states[i, j])
            assert fast[i, j] == pytest.approx(slow, rel=1e-12, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(MODEL_NAMES), st.integers(0, 2 ** 31 - 1))
def test_operator_matches_rhs_off_ensemble(name, seed):
    model, dgms, part = setup(name, m=3, n_dgm=2)
    rng = np.random.default_rng(seed)
    snap = random_snapshot(model, part, 3, rng)
    rhs = build_rhs(model, dgms, snap.a_weights, 3)
    phi = model.sample_states(1, rng)[0]
    cell = int(rng.integers(len(part)))
    fast = rhs.velocity(0.0, snap.states, phi[None, :], np.array([cell]))[0]
    assert fast == pytest.approx(vlasov_operator(model, dgms, snap, 0.0, cell, phi), rel=1e-12, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_sis_velocity_conserves_population(seed):
    model, dgms, part = setup("sis")
    rng = np.random.default_rng(seed)
    snap = random_snapshot(model, part, 4, rng)
    phi = model.sample_states(1, rng)[0]
    v = vlasov_operator(model, dgms, snap, 0.0, int(rng.integers(4)), phi)
    assert v.sum() == pytest.approx(0.0, abs=1e-14)


def test_operator_rejects_bad_input():
    model, dgms, part = setup("sis")
    snap = Snapshot(part, np.ones(4), np.zeros((4, 2, 2)))
    with pytest.raises(IndexError):
        vlasov_operator(model, dgms, snap, 0.0, 4, [0.5, 0.5])
    with pytest.raises(ValueError):
        vlasov_operator(model, dgms, snap, 0.0, 0, [np.nan, 0.5])
    with pytest.raises(ValueError):
        vlasov_operator(model, dgms + dgms, snap, 0.0, 0, [0.5, 0.5])


def test_custom_model_with_zero_kernel():
    model = custom_model("decay", 1, [zero_kernel(1)], lambda t, x, phi: -phi)
    part = make_partition(catalog("tent").space, 2)
    dgm = discretize_dgm(catalog("tent"), part, 2)
    snap = Snapshot(part, np.ones(2), np.ones((2, 3, 1)))
    assert vlasov_operator(model, [dgm], snap, 0.0, 1, [0.25]).tolist() == [-0.25]


# -- invariance and Lipschitz ----------------------------------------------------

@pytest.mark.parametrize("name", MODEL_NAMES)
def test_bony_condition_holds(name):
    model, dgms, part = setup(name)
    report = bony_check(model, dgms, ensemble_bounds=1.0, samples=60)
    assert report.passed, report.summary()
    if name == "kuramoto":
        assert report.skipped


def test_bony_detects_too_small_box():
    model = builtin_model("lv", {"Lambda1": 0.5}, check=False)
    part = make_partition(catalog("tent").space, 4)
    dgms = [discretize_dgm(catalog("tent"), part, 3)] * 2
    report = bony_check(model, dgms, samples=60)
    assert not report.passed
    # prey growth u (alpha - beta u) on the face u = Lambda1 with no predators
    assert report.max_flux == pytest.approx(0.5 * (1 - 0.5), rel=1e-9)
    assert "FAIL" in report.summary()


def test_kuramoto_kernel_lipschitz_constant():
    model = builtin_model("kuramoto", {"K": 2.0})
    est = kernel_lipschitz(model, model.kernels[0], samples=4000)
    # |sin a - sin b| <= |a - b| <= |dpsi| + |dphi|, approached for small steps
    assert 0.95 * 2.0 <= est <= 2.0 + 1e-12


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_flow_lipschitz_bound_dominates_samples(name):
    model, dgms, part = setup(name)
    a = np.ones(len(part))
    bound = flow_lipschitz_bound(model, dgms, a, samples=500)
    assert np.isfinite(bound) and bound > 0
    rhs = build_rhs(model, dgms, a, 3)
    rng = np.random.default_rng(5)
    snap = random_snapshot(model, part, 3, rng)
    phi1 = model.sample_states(200, rng)
    phi2 = model.sample_states(200, rng)
    cells = rng.integers(len(part), size=200)
    v1 = rhs.velocity(0.0, snap.states, phi1, cells)
    v2 = rhs.velocity(0.0, snap.states, phi2, cells)
    ratio = np.abs(v1 - v2).sum(axis=1) / np.abs(phi1 - phi2).sum(axis=1)
    assert ratio.max() <= 1.05 * bound


# -- parameter validation ---------------------------------------------------------

@pytest.mark.parametrize("name, params, text", [
    ("sis", {"beta0": -1}, "beta0 >= 0"),
    ("sis", {"N": 0}, "N > 0"),
    ("seirs", {"d": 0}, "d_i > 0"),
    ("seirs", {"M": 0.5}, "M >= sup Lambda/d"),
    ("seirs", {"Lambda_amp": 2}, "Lambda_amp"),
    ("lotka_volterra", {"W1": 1.5}, "W1, W2 <= 1"),
    ("lotka_volterra", {"Lambda1": 0.5}, "Lambda1 >= alpha/beta"),
    ("lotka_volterra", {"Lambda2": 0.1, "sigma": 1.0, "iota": 0.0}, "Lambda2 >="),
    ("hegselmann_krause", {"Lambda": 0}, "Lambda > 0"),
    ("hegselmann_krause", {"G": "gauss"}, "unknown interaction"),
])
def test_parameter_errors_name_the_inequality(name, params, text):
    with pytest.raises(ParameterError, match=text.replace("(", r"\(")):
        builtin_model(name, params)


def test_unchecked_parameters_are_accepted():
    assert builtin_model("lv", {"Lambda1": 0.5}, check=False).params["Lambda1"] == 0.5


def test_unknown_model():
    with pytest.raises(KeyError):
        builtin_model("ising")


def test_default_lv_box_meets_its_constraints():
    p = builtin_model("lv").params
    assert p["Lambda1"] >= p["alpha"] / p["beta"]
    assert p["Lambda2"] >= (-p["iota"] + p["sigma"] * p["Lambda1"]) / p["theta"]
