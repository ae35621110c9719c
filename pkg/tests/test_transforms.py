import numpy as np
import pytest

from lss_basis.errors import (
    DimensionError,
    DwellTimeError,
    ObservabilityError,
    PreconditionError,
    UnsolvablePairError,
)
from lss_basis.local import cluster_estimates, default_eps, synthesize_local
from lss_basis.model import (
    DiscreteState,
    HybridInput,
    SwitchedModel,
    SwitchingSequence,
    apply_similarity,
    markov_parameter,
)
from lss_basis.signals import generate_input, generate_switching, simulate
from lss_basis.transforms import (
    assemble_transitions,
    build_observability,
    compute_kappa,
    compute_zeta,
    correct_basis,
    estimate_initial_state,
    estimate_state,
    solve_all,
    solve_upsilon,
)

from conftest import rel


@pytest.fixture
def learned(model, learning_run):
    omega, tr = learning_run
    est = synthesize_local(model, omega.phi, seed=14)
    cl = cluster_estimates(est, default_eps(model), sigma=3)
    T = {v: est.hidden_T[i] for v, i in cl.representative_index.items()}
    return est, cl, T


def oracle(T, nu, mu):
    return np.linalg.inv(T[mu]) @ T[nu]


def test_observability_stack_structure(model):
    s = model[3]
    st = build_observability(s, 4)
    assert st.O.shape == (10, 3) and st.Gamma.shape == (10, 10) and st.rank == 3
    # first block column is [D; CB; CAB; CA^2B; CA^3B]
    col = st.Gamma[:, :2]
    expected = [s.D] + [s.C @ np.linalg.matrix_power(s.A, j) @ s.B for j in range(4)]
    assert np.allclose(col, np.vstack(expected))
    assert not st.Gamma[:2, 2:].any()
    assert np.allclose(st.Gamma[6:8, 2:4], s.C @ s.A @ s.B)
    assert build_observability(s, 2).rank == 3


def test_observability_failures(model):
    with pytest.raises(ObservabilityError):
        build_observability(DiscreteState(model[1].A, model[1].B, np.zeros((2, 3)), model[1].D), 2)
    assert build_observability(DiscreteState(model[1].A, model[1].B, np.zeros((2, 3)), model[1].D),
                               2, check=False).rank == 0
    with pytest.raises(PreconditionError):
        build_observability(model[1], 1)


def test_estimate_state_exact(model, rng):
    s = model[2]
    q = 5
    phi = SwitchingSequence(np.full(q + 1, 2), sigma=2, surjective=False)
    u = rng.standard_normal((q + 1, 2))
    x = rng.standard_normal(3)
    y = simulate(SwitchedModel((model[1], s)), HybridInput(phi, u), x).y
    st = build_observability(s, q)
    assert np.linalg.norm(estimate_state(st, y, u) - x) <= 1e-10 * np.linalg.norm(x)
    assert np.array_equal(estimate_state(st, np.zeros_like(y), np.zeros_like(u)), np.zeros(3))
    with pytest.raises(DimensionError):
        estimate_state(st, y[:-1], u)


def test_estimate_state_in_transformed_basis(model, rng):
    s = model[1]
    T = rng.uniform(-1, 1, (3, 3))
    shat = apply_similarity(s, T)
    q = 4
    u = rng.standard_normal((q + 1, 2))
    x = rng.standard_normal(3)
    phi = SwitchingSequence(np.ones(q + 1, dtype=int), sigma=1)
    y = simulate(SwitchedModel((s,)), HybridInput(phi, u), x).y
    xhat = estimate_state(build_observability(shat, q), y, u)
    ref = np.linalg.solve(T, x)
    assert np.linalg.norm(xhat - ref) <= 1e-8 * np.linalg.norm(x) * np.linalg.cond(T)


def test_kappa_zero_input(model, rng):
    xhat = rng.standard_normal(3)
    u = np.zeros((20, 2))
    kappa = compute_kappa(model[1], xhat, u, t=3, k_i=10)
    assert np.allclose(kappa, np.linalg.matrix_power(model[1].A, 7) @ xhat)


def test_kappa_closed_form(model, rng):
    s = model[2]
    xhat, u = rng.standard_normal(3), rng.standard_normal((20, 2))
    t, k_i = 4, 12
    expected = np.linalg.matrix_power(s.A, k_i - t) @ xhat
    expected += sum(np.linalg.matrix_power(s.A, k_i - l - 1) @ s.B @ u[l - 1] for l in range(t, k_i))
    assert np.allclose(compute_kappa(s, xhat, u, t, k_i), expected, atol=1e-13)


def test_kappa_window_violation(model):
    with pytest.raises(PreconditionError):
        compute_kappa(model[1], np.zeros(3), np.zeros((20, 2)), t=9, k_i=10)
    with pytest.raises(PreconditionError):
        compute_kappa(model[1], np.zeros(3), np.zeros((20, 2)), t=2, k_i=10, k_prev=3)


def test_kappa_independent_of_start(model, learned, learning_run):
    # any feasible start inside the segment yields the same kappa
    omega, tr = learning_run
    est, cl, _ = learned
    phi, n = omega.phi, model.n
    for i, nu, _mu in phi.transitions()[:6]:
        k_prev, k_i = int(phi.segment_starts[i - 1]), int(phi.segment_starts[i])
        rep = cl.representatives[nu]
        st = build_observability(rep, n - 1)
        kappas = []
        for t in range(k_prev, k_i - n + 1):
            xhat = estimate_state(st, tr.y[t - 1:t + n - 1], omega.u[t - 1:t + n - 1])
            kappas.append(compute_kappa(rep, xhat, omega.u, t, k_i, k_prev))
        ref = kappas[-1]
        for kap in kappas:
            assert np.linalg.norm(kap - ref) <= 1e-9 * (1 + np.linalg.norm(ref))


def test_zeta_definition_branches(model, rng):
    s = model[3]
    y, u = rng.standard_normal((30, 2)), rng.standard_normal((30, 2))
    assert np.allclose(compute_zeta(s, y, u, 10, 10), y[9] - s.D @ u[9])
    assert np.array_equal(compute_zeta(s, y, np.zeros((30, 2)), 14, 10), y[13])
    expected = y[12] - s.D @ u[12] - sum(s.C @ np.linalg.matrix_power(s.A, 13 - l - 1) @ s.B @ u[l - 1]
                                         for l in range(10, 13))
    assert np.allclose(compute_zeta(s, y, u, 13, 10), expected)
    with pytest.raises(PreconditionError):
        compute_zeta(s, y, u, 9, 10)
    with pytest.raises(PreconditionError):
        compute_zeta(s, y, u, 15, 10, k_next=15)


def test_zeta_factorizes_through_upsilon(model, learned, learning_run):
    omega, tr = learning_run
    est, cl, T = learned
    td = assemble_transitions(cl.representatives, omega.phi, omega.u, tr.y)
    for i, nu, mu in omega.phi.transitions()[:8]:
        k_i = int(omega.phi.segment_starts[i])
        rep = cl.representatives[mu]
        U = oracle(T, nu, mu)
        for j in range(4):
            z = compute_zeta(rep, tr.y, omega.u, k_i + j, k_i)
            pred = rep.C @ np.linalg.matrix_power(rep.A, j) @ U @ td.kappas[i]
            assert np.abs(z - pred).max() <= 1e-8 * max(1.0, np.abs(z).max())


def test_single_transition_is_rank_one(model, rng):
    phi = SwitchingSequence(np.repeat([1, 2, 3], [15, 15, 15]), sigma=3)
    u = rng.standard_normal((45, 2))
    y = simulate(model, HybridInput(phi, u), rng.standard_normal(3)).y
    est = synthesize_local(model, phi, seed=0)
    reps = cluster_estimates(est, default_eps(model), sigma=3).representatives
    td = assemble_transitions(reps, phi, u, y)
    assert td.index_set((1, 2)) == (1,)
    pd = td.pairs[(1, 2)]
    assert pd.Psi.shape == (3, 1) and pd.rank == 1
    assert td.q == 14
    with pytest.raises(UnsolvablePairError):
        solve_upsilon(td, (1, 2))
    with pytest.raises(UnsolvablePairError):
        solve_upsilon(td, (3, 1))
    assert (2, 2) not in td.pairs


def test_dwell_violation(model, rng):
    phi = SwitchingSequence(np.repeat([1, 2, 3, 1], [10, 2, 10, 10]), sigma=3)
    u = rng.standard_normal((32, 2))
    y = simulate(model, HybridInput(phi, u)).y
    with pytest.raises(DwellTimeError):
        assemble_transitions(dict(enumerate(model, start=1)), phi, u, y)


def test_white_noise_long_dwell_full_rank(model):
    phi = generate_switching(3, 3000, 30, seed=8, max_dwell=80)
    u = generate_input("white", 2, 3000, seed=9)
    y = simulate(model, HybridInput(phi, u), np.ones(3)).y
    reps = cluster_estimates(synthesize_local(model, phi, seed=1), default_eps(model)).representatives
    td = assemble_transitions(reps, phi, u, y)
    for pair, pd in td.pairs.items():
        if pd.cardinality >= 3:
            assert pd.rank == 3, pair


def test_solved_upsilon_matches_hidden_transforms(model, learned, learning_run):
    omega, tr = learning_run
    est, cl, T = learned
    td = assemble_transitions(cl.representatives, omega.phi, omega.u, tr.y)
    sols = solve_all(td)
    assert sols
    for (nu, mu), s in sols.items():
        assert rel(s.upsilon, oracle(T, nu, mu)) <= 1e-7
        assert s.residual <= 1e-8 * s.z_norm
    if (1, 2) in sols and (2, 1) in sols:
        assert np.allclose(sols[(1, 2)].upsilon @ sols[(2, 1)].upsilon, np.eye(3), atol=1e-6)
    assert np.array_equal(solve_upsilon(td, (2, 2)).upsilon, np.eye(3))


def test_correct_basis_matches_cross_switch_markov(model, learned, learning_run):
    omega, _ = learning_run
    est, cl, T = learned
    anchored = {j: oracle(T, j, 1) for j in (1, 2, 3)}
    corrected = correct_basis(cl.representatives, anchored)
    phi = omega.phi
    for k_i in phi.switch_times[:5]:
        k_i = int(k_i)
        for k, l in ((k_i, k_i - 1), (k_i + 1, k_i - 2), (k_i + 2, k_i - 1)):
            h = markov_parameter(model, phi, k, l)
            assert np.abs(markov_parameter(corrected, phi, k, l) - h).max() <= 1e-8


def test_correct_basis_single_mode(model):
    corrected = correct_basis({1: model[2]}, {1: np.eye(3)})
    assert all(np.array_equal(getattr(corrected[1], k), getattr(model[2], k)) for k in "ABCD")
    with pytest.raises(PreconditionError):
        correct_basis({1: model[1], 2: model[2]}, {1: np.eye(3)})


def test_check_representation_without_transforms(model, learned, learning_run):
    # zeta(k) = C_check A_check^(k - k_i) kappa_check, with kappa_check built from corrected matrices
    omega, tr = learning_run
    est, cl, T = learned
    corrected = correct_basis(cl.representatives, {j: oracle(T, j, 1) for j in (1, 2, 3)})
    phi = omega.phi
    q = phi.min_dwell - 1
    for i, nu, mu in phi.transitions()[:6]:
        k_prev, k_i = int(phi.segment_starts[i - 1]), int(phi.segment_starts[i])
        st = build_observability(corrected[nu], q)
        w = slice(k_prev - 1, k_prev + q)
        xc = estimate_state(st, tr.y[w], omega.u[w])
        kc = compute_kappa(corrected[nu], xc, omega.u, k_prev, k_i, k_prev)
        for j in range(3):
            z = compute_zeta(corrected[mu], tr.y, omega.u, k_i + j, k_i)
            pred = corrected[mu].C @ np.linalg.matrix_power(corrected[mu].A, j) @ kc
            assert np.abs(z - pred).max() <= 1e-8 * max(1.0, np.abs(z).max())


def test_initial_state_estimate_short_first_segment(model, rng):
    phi = SwitchingSequence([1, 2, 3, 3, 1, 1, 2, 2, 2, 3, 1, 2], sigma=3)
    u = rng.standard_normal((12, 2))
    x0 = rng.standard_normal(3)
    y = simulate(model, HybridInput(phi, u), x0).y
    xhat = estimate_initial_state(model, HybridInput(phi, u), y)
    assert np.allclose(xhat, x0, atol=1e-10)
