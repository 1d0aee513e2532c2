"""Acceptance suite: one group of tests per criterion, at the stated tolerances.

``conftest.py`` prints a PASS/FAIL line for each criterion at the end of the run.
"""
import numpy as np
import pytest

from microlab.decoherence import (
    choi_matrix,
    dephasing_model,
    lindblad_evolve,
    step_map,
    thermal_damping_model,
    LindbladModel,
)
from microlab.demixing import (
    admissible_family,
    build_transfer_term,
    cross_term_residual,
    equivalence_test,
    full_cross_residual,
    mixture_decompose,
    state_from_term,
)
from microlab.fock import BOSON, FERMION, build_basis, mode_annihilator, number_op, one_body
from microlab.kernel import duhamel_factors, gauss_legendre, hermitian_exp
from microlab.microsystem import (
    commuting_projection,
    depletion,
    depletion_bound,
    dressed_observable,
    effective_w,
    free_evolve,
    full_space_expectation,
    heisenberg_equivalence,
    identity_transfer_bound,
    no_signal_gap,
    reduced_expectation,
    revival_time,
    sigma,
    sigma_spectral,
    transferred_observable,
)
from microlab.modes import BoxSpec, box_eigenmodes, cell_kernel, partition_cells
from microlab.preparation import (
    RelevantVariableSet,
    exact_state,
    expanded_state,
    first_order_transfer,
    fit_state_parameters,
    gibbs_state,
    split_exponent,
)

STATS = [BOSON, FERMION]
CAPS = [(2, 1), (1, 2)]
TIMES = [0.0, 1.0, 10.0]


def crit(n):
    return pytest.mark.criterion(n)


def rand_herm(rng, n, norm):
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    H = 0.5 * (X + X.conj().T)
    return norm * H / np.linalg.norm(H, 2)


def gibbs(S):
    R = hermitian_exp(-S)
    return R / np.trace(R).real


# 1

@crit(1)
def test_duhamel_identity_random_trials():
    rng = np.random.default_rng(101)
    rule = gauss_legendre(64)
    worst = 0.0
    for trial in range(20):
        n = int(rng.integers(4, 7))
        A = rand_herm(rng, n, rng.uniform(0.5, 3.0))
        B = rand_herm(rng, n, rng.uniform(0.1, 1.0))
        L, R = duhamel_factors(A, B, rule)
        worst = max(worst, np.linalg.norm(L @ hermitian_exp(A) @ R - hermitian_exp(A + B)))
    assert worst < 1e-8


# 2

def random_local_exponent(b, rng):
    rb1, rb2 = b.region_basis(1), b.region_basis(2)
    S1 = np.where(rb1.sector_mask(), rand_herm(rng, rb1.dim, 1.0), 0)
    S2 = np.where(rb2.sector_mask(), rand_herm(rng, rb2.dim, 1.0), 0)
    return b.embed(S1, 1) + b.embed(S2, 2)


@crit(2)
@pytest.mark.parametrize("stat", STATS)
def test_first_order_error_scaling(stat):
    rng = np.random.default_rng(202)
    b = build_basis(2, 2, stat, region_caps=(2, 2))
    ratios = []
    for _ in range(10):
        S0 = random_local_exponent(b, rng)
        d = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        X = build_transfer_term(b, d).operator
        X = X + X.conj().T
        X /= np.linalg.norm(X, 2)
        errs = []
        for g in (0.02, 0.01):
            S = S0 + g * X
            C, rho1, rho2 = first_order_transfer(split_exponent(S, b))
            errs.append(np.linalg.norm(exact_state(S) - expanded_state(rho1, rho2, C)))
        ratios.append(errs[0] / errs[1])
    assert all(3.0 <= r <= 5.0 for r in ratios), ratios


# 3

@crit(3)
@pytest.mark.parametrize("stat", STATS)
def test_expanded_state_positive_adversarial(stat):
    rng = np.random.default_rng(303)
    b = build_basis(3, 3, stat, region_caps=(2, 1))
    d1, d2 = b.region_dims
    rho1 = gibbs(rand_herm(rng, d1, 3.0))
    rho2 = gibbs(rand_herm(rng, d2, 3.0))
    n = b.dim
    worst = np.inf
    candidates = []
    for scale in (1e-3, 1.0, 1e2, 1e6, 1e10):
        candidates.append(scale * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))))
        candidates.append(scale * build_transfer_term(b, rng.normal(size=(3, 3))).operator)
    candidates.append(-np.eye(n))                       # 1 + C = 0 on the whole space but one column
    candidates[-1][0, 0] = 0.0
    N = np.diag(np.arange(n, dtype=float))
    candidates.append(np.triu(np.ones((n, n)), 1) * 1e8 + N)   # nilpotent plus large
    for C in candidates:
        rho = expanded_state(rho1, rho2, C)
        worst = min(worst, np.linalg.eigvalsh(rho)[0])
        assert abs(np.trace(rho) - 1) < 1e-10
    assert worst >= -1e-12


# 4-6 share one desk-scale instance per statistics and truncation

def desk_instance(stat, caps, seed=404):
    b = build_basis(3, 3, stat, region_caps=caps)
    rb1, rb2 = b.region_basis(1), b.region_basis(2)
    m1 = box_eigenmodes(BoxSpec(mode_count=3), 1024)
    m2 = box_eigenmodes(BoxSpec(length=1.3, mode_count=3), 1024)
    W1, W2 = m1.energies, m2.energies
    h1 = one_body(rb1, np.diag(W1), 1)
    h2 = one_body(rb2, np.diag(W2), 1)
    rho1 = gibbs(0.4 * h1 + 1.0 * number_op(rb1, 1))
    rho2 = gibbs(0.1 * h2 - 0.5 * number_op(rb2, 1))
    rng = np.random.default_rng(seed)
    term = build_transfer_term(b, 0.2 * (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))))
    k1 = [cell_kernel(m1, c).matrix for c in partition_cells(m1.spec.length, 2)]
    k2 = [cell_kernel(m2, c).matrix for c in partition_cells(m2.spec.length, 2)]
    family = admissible_family(b, 25, rng, k1, k2, W1, W2)
    return dict(basis=b, rho1=rho1, rho2=rho2, term=term, h1=h1, h2=h2,
                H1=b.embed(h1, 1), H2=b.embed(h2, 2), family=family)


INSTANCES = [(s, c) for s in STATS for c in CAPS]


@pytest.fixture(scope="module", params=INSTANCES, ids=[f"{s}-caps{c[0]}{c[1]}" for s, c in INSTANCES])
def desk(request):
    return desk_instance(*request.param)


@crit(4)
def test_mixture_equivalence(desk):
    assert len(desk["family"]) == 25
    mix = mixture_decompose(desk["rho1"], desk["rho2"], desk["term"])
    rho = state_from_term(desk["rho1"], desk["rho2"], desk["term"])
    dev = equivalence_test(rho, mix, [f.full for f in desk["family"]], desk["H1"], desk["H2"],
                           TIMES, desk["basis"])
    assert dev < 1e-10


@crit(5)
def test_cross_terms_vanish(desk):
    b = desk["basis"]
    d1, d2 = b.region_dims
    locals1 = [np.eye(d1)] + [f.local1 for f in desk["family"] if f.local1 is not None]
    locals2 = [np.eye(d2)] + [f.local2 for f in desk["family"] if f.local2 is not None]
    worst = 0.0
    for A1 in locals1:
        for A2 in locals2:
            worst = max(worst, cross_term_residual(A1, A2, desk["term"], desk["rho1"], desk["rho2"]))
    for f in desk["family"]:
        worst = max(worst, full_cross_residual(f.full, desk["term"], desk["rho1"], desk["rho2"]))
    assert worst < 1e-12


@crit(6)
def test_reduced_matches_full_space(desk):
    region1 = [f.local1 for f in desk["family"] if f.region1_only]
    assert len(region1) >= 5
    worst = 0.0
    for A in region1:
        for t in TIMES:
            r = reduced_expectation(A, desk["rho1"], desk["rho2"], desk["term"], desk["h1"], t)
            full = full_space_expectation(A, desk["term"], desk["rho1"], desk["rho2"], desk["h1"], t)
            worst = max(worst, abs(r.value - full))
    assert worst < 1e-10


# 7

def diag_state(rb, weights):
    rho = np.zeros((rb.dim, rb.dim))
    for occ, p in weights.items():
        rho[rb.index[occ], rb.index[occ]] = p
    return rho / rho.trace()


@crit(7)
@pytest.mark.parametrize("stat", STATS)
def test_sigma_vacuum(stat):
    b = build_basis(3, 3, stat, region_caps=(2, 1))
    rb1, rb2 = b.region_basis(1), b.region_basis(2)
    rng = np.random.default_rng(7)
    term = build_transfer_term(b, rng.normal(size=(3, 3)))
    rho2 = gibbs(one_body(rb2, np.diag([0.2, 0.5, 0.9]), 1))
    assert abs(sigma(term, diag_state(rb1, {(0, 0, 0): 1.0}), rho2) - 1) < 1e-12


@crit(7)
def test_sigma_boson_occupation():
    nbar = 0.1
    b = build_basis(1, 1, BOSON, region_caps=(60, 1))
    rb1, rb2 = b.region_basis(1), b.region_basis(2)
    x = nbar / (1 + nbar)
    rho1 = diag_state(rb1, {(n,): x**n for n in range(61)})
    rho2 = diag_state(rb2, {(0,): 0.4, (1,): 0.6})
    assert abs(1 / sigma(build_transfer_term(b, [[1.0]]), rho1, rho2) - (1 + nbar)) < 1e-10


@crit(7)
def test_sigma_fermion_occupation():
    nbar = 0.1
    b = build_basis(1, 1, FERMION, region_caps=(1, 1))
    rb1, rb2 = b.region_basis(1), b.region_basis(2)
    rho1 = diag_state(rb1, {(0,): 1 - nbar, (1,): nbar})
    rho2 = diag_state(rb2, {(0,): 0.4, (1,): 0.6})
    assert abs(1 / sigma(build_transfer_term(b, [[1.0]]), rho1, rho2) - (1 - nbar)) < 1e-10


@crit(7)
@pytest.mark.parametrize("stat,caps", [(BOSON, (10, 1)), (FERMION, (3, 1))])
def test_sigma_spectral_identity_mixed_w(stat, caps):
    # the detector cap is out of reach of rho1 so the emitted creators are never truncated
    b = build_basis(3, 3, stat, region_caps=caps)
    rb1, rb2 = b.region_basis(1), b.region_basis(2)
    rho1 = gibbs(one_body(rb1, np.diag([1.0, 4.0, 9.0]), 1) + 2.0 * number_op(rb1, 1))
    rho2 = gibbs(one_body(rb2, np.diag([0.3, 0.6, 1.2]), 1) - 0.5 * number_op(rb2, 1))
    rng = np.random.default_rng(77)
    term = build_transfer_term(b, rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
    w = effective_w(term, rho2)
    assert w.purity < 0.99
    assert abs(1 / sigma(term, rho1, rho2) - sigma_spectral(w, rho1, rb1, stat)) < 1e-10


# 8

@crit(8)
@pytest.mark.parametrize("stat", STATS)
def test_heisenberg_random_pairs(stat):
    rb = build_basis(3, 0, stat, N_total=3)
    m = box_eigenmodes(BoxSpec(mode_count=3), 1024)
    H1 = one_body(rb, np.diag(m.energies), 1)
    rng = np.random.default_rng(808)
    worst = 0.0
    for _ in range(10):
        psi = rng.normal(size=3) + 1j * rng.normal(size=3)
        psi /= np.linalg.norm(psi)
        worst = max(worst, heisenberg_equivalence(psi, rb, H1, rng.uniform(0.0, 10.0)))
    assert worst < 1e-10


@crit(8)
def test_two_mode_revival():
    m = box_eigenmodes(BoxSpec(mode_count=2), 1024)
    psi = np.array([1.0, 1.0]) / np.sqrt(2)
    T = 2 * np.pi * m.spec.hbar / (m.energies[1] - m.energies[0])
    found = revival_time(psi, m, 1.1 * T)
    assert abs(found - T) / T < 1e-8
    assert abs(abs(np.vdot(psi, free_evolve(psi, m, found))) - 1) < 1e-10


# 9

@crit(9)
@pytest.mark.parametrize("stat", STATS)
def test_psd_observables_transfer_to_psd(stat):
    inst = desk_instance(stat, (2, 1))
    rb1 = inst["basis"].region_basis(1)
    rng = np.random.default_rng(909)
    worst = np.inf
    for i in range(20):
        X = np.where(rb1.sector_mask(), rng.normal(size=(rb1.dim,) * 2) + 1j * rng.normal(size=(rb1.dim,) * 2), 0)
        A = transferred_observable(X @ X.conj().T, inst["rho1"], inst["h1"], inst["term"], TIMES[i % 3])
        worst = min(worst, np.linalg.eigvalsh(A.matrix)[0])
    assert worst >= -1e-10


@crit(9)
@pytest.mark.parametrize("stat,caps", [(BOSON, (2, 1)), (FERMION, (2, 1)), (FERMION, (3, 1))])
def test_identity_transfer_within_bound(stat, caps):
    inst = desk_instance(stat, caps)
    rb1 = inst["basis"].region_basis(1)
    for t in TIMES:
        A = transferred_observable(np.eye(rb1.dim), inst["rho1"], inst["h1"], inst["term"], t).matrix
        gap = np.linalg.norm(A - np.eye(3), 2)
        assert gap <= identity_transfer_bound(inst["rho1"], rb1) + 1e-12
        if stat == FERMION and caps[0] == 3:
            # no cap truncation: the depletion bound alone holds
            assert gap <= depletion_bound(inst["rho1"], rb1) + 1e-12


# 10

@crit(10)
@pytest.mark.parametrize("model,method", [
    (dephasing_model([1.0, 4.0, 9.0], 0.5), "rk4"),
    (thermal_damping_model([1.0, 4.0, 9.0], 0.5, 1.0), "rk4"),
    (dephasing_model([1.0, 4.0, 9.0], 0.5) + thermal_damping_model([1.0, 4.0, 9.0], 0.2, 0.5), "exact"),
])
def test_lindblad_trace_and_positivity(model, method):
    rng = np.random.default_rng(1010)
    X = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    w0 = X @ X.conj().T
    w0 /= np.trace(w0).real
    traj = lindblad_evolve(w0, model, 0.01, 1000, method)
    assert traj.trace_drift() < 1e-9
    assert traj.column("min_eig").min() >= -1e-10


@crit(10)
@pytest.mark.parametrize("model", [dephasing_model([1.0, 4.0, 9.0], 0.5),
                                   thermal_damping_model([1.0, 4.0, 9.0], 0.5, 1.0)])
def test_lindblad_choi_psd(model):
    assert np.linalg.eigvalsh(choi_matrix(step_map(model, 0.01), 3))[0] >= -1e-8


@crit(10)
def test_dephasing_decay_closed_form():
    gamma = 0.5
    model = LindbladModel(np.zeros((3, 3)), dephasing_model([1.0, 4.0, 9.0], gamma).jumps, (gamma,) * 3)
    w0 = np.full((3, 3), 1 / 3)
    traj = lindblad_evolve(w0, model, 0.01, 1000)
    worst = max(abs(abs(w[0, 2]) - np.exp(-gamma * t) / 3) for t, w in zip(traj.times, traj.states))
    assert worst < 1e-6


@crit(10)
def test_unital_purity_nonincreasing():
    model = dephasing_model([1.0, 4.0, 9.0], 0.5)
    assert model.is_unital()
    traj = lindblad_evolve(np.full((3, 3), 1 / 3), model, 0.01, 1000)
    assert np.diff(traj.column("purity")).max() <= 1e-12


# 11

@crit(11)
def test_gibbs_fit_roundtrip():
    m = box_eigenmodes(BoxSpec(mode_count=3), 1024)
    b = build_basis(3, 0, BOSON, N_total=3)
    vs = RelevantVariableSet.from_pairs([
        ("number", number_op(b)),
        ("energy", one_body(b, np.diag(m.energies / m.energies[0]), 1)),
        ("cell", one_body(b, cell_kernel(m, (0.0, 0.4)).matrix, 1)),
    ])
    targets = vs.expectations(gibbs_state(vs, [0.8, 0.25, -0.6]))
    fit = fit_state_parameters(vs, targets)
    assert fit.converged and fit.iterations <= 50
    assert np.abs(vs.expectations(gibbs_state(vs, fit.zeta)) - targets).max() < 1e-8


# 12

@crit(12)
@pytest.mark.parametrize("stat", STATS)
def test_no_signal_vacuum_exact(stat):
    rb = build_basis(3, 0, stat, N_total=3)
    m = box_eigenmodes(BoxSpec(mode_count=3), 1024)
    # psi lives on mode 2 and the cell observable acts only on modes 1 and 3
    psi_t = free_evolve(np.array([0.0, 1.0, 0.0]), m, 0.7)
    K = cell_kernel(m, (0.1, 0.45)).matrix.copy()
    K[1, :] = 0
    K[:, 1] = 0
    A = one_body(rb, K, 1)
    a = mode_annihilator(rb, 1, psi_t)
    assert np.abs(a @ A - A @ a).max() == 0
    vac = diag_state(rb, {(0, 0, 0): 1.0})
    D = dressed_observable(A, psi_t, rb)
    assert np.trace(D.direct @ vac) - np.trace(A @ vac) == 0
    diff, bound = no_signal_gap(A, psi_t, vac, rb)
    assert diff == 0.0 and bound == 0.0


@crit(12)
@pytest.mark.parametrize("stat", STATS)
def test_no_signal_bounded_by_depletion(stat):
    rb = build_basis(3, 0, stat, N_total=3)
    m = box_eigenmodes(BoxSpec(mode_count=3), 1024)
    psi_t = free_evolve(np.array([0.0, 0.6, 0.8]), m, 2.3)
    A = one_body(rb, commuting_projection(cell_kernel(m, (0.3, 0.8)).matrix, psi_t), 1)
    rho1 = gibbs(one_body(rb, np.diag(m.energies), 1) * 0.3 + 1.0 * number_op(rb, 1))
    diff, bound = no_signal_gap(A, psi_t, rho1, rb)
    assert depletion(rho1, psi_t, rb) < 0.05
    assert diff <= bound
