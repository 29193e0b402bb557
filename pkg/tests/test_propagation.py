import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.linalg import expm

from zenochem.model import PHENOMENOLOGICAL, QUANTUM, SimParams, build_hamiltonian
from zenochem.propagation import (
    RECURSION,
    IntegrationError,
    TimeStepError,
    creation_convolution,
    jump_probabilities,
    lindblad_dissipator,
    liouvillian_matrix,
    propagate,
    propagate_exact,
    rhs_phenomenological,
    rhs_quantum,
    rhs_quantum_two_channel,
    step_rk4,
    unvec,
    vec,
)
from zenochem.spin_algebra import CapacityError, Nucleus, SystemSpec, build_space


def random_density(dim, rng):
    X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = X @ X.conj().T
    return rho / np.trace(rho)


@pytest.fixture
def ops(paper_spec):
    return build_space(paper_spec)


@pytest.fixture
def H49(paper_spec, ops):
    return build_hamiltonian(paper_spec, ops, 49.0)


# --- right-hand sides -------------------------------------------------------


def test_phenomenological_singlet_decay(ops):
    Z = np.zeros((8, 8))
    out = rhs_phenomenological(ops.QS / 2, Z, 0.05, 0.0, 0.0, ops.QS, ops.QT)
    np.testing.assert_allclose(out, -0.1 * ops.QS / 2, atol=1e-15)
    assert np.trace(out).real == pytest.approx(-0.1, abs=1e-15)


def test_phenomenological_triplet_untouched_by_singlet_channel(ops):
    Z = np.zeros((8, 8))
    out = rhs_phenomenological(ops.QT / 6, Z, 0.7, 0.0, 0.0, ops.QS, ops.QT)
    assert np.max(np.abs(out)) <= 1e-15


def test_phenomenological_trace_identity(ops, H49):
    rng = np.random.default_rng(1)
    for _ in range(10):
        X = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        rho = (X + X.conj().T) / 2
        kS, kT, kSR = rng.uniform(0, 4, size=3)
        out = rhs_phenomenological(rho, H49, kS, kT, kSR, ops.QS, ops.QT)
        S = np.trace(rho @ ops.QS).real
        T = np.trace(rho @ ops.QT).real
        tr_direct = sum(out[i, i] for i in range(8))
        assert tr_direct.real == pytest.approx(-2 * kS * S - 2 * kT * T - kSR * np.trace(rho).real, abs=1e-12)
        np.testing.assert_allclose(out, out.conj().T, atol=1e-12)


def test_quantum_singlet_is_dark(ops):
    out = rhs_quantum(ops.QS / 2, np.zeros((8, 8)), 0.05, 3.5, 0.0, ops.QS, ops.QT, 2)
    assert np.max(np.abs(out)) <= 1e-15


def test_quantum_trace_preserving(ops, H49):
    rng = np.random.default_rng(2)
    for _ in range(10):
        rho = random_density(8, rng)
        out = rhs_quantum(rho, H49, 0.3, 2.0, 0.0, ops.QS, ops.QT, 2)
        assert abs(np.trace(out)) <= 1e-12
        out = rhs_quantum(rho, H49, 0.3, 2.0, 1.7, ops.QS, ops.QT, 2)
        assert abs(np.trace(out)) <= 1e-12


def test_quantum_relaxation_trace_law(ops):
    rho = 2.0 * ops.QS / 2  # trace 2
    out = rhs_quantum(rho, np.zeros((8, 8)), 0.0, 0.0, 1.5, ops.QS, ops.QT, 2)
    assert np.trace(out).real == pytest.approx(-1.5 * (2 - 1), abs=1e-14)


def test_block_diagonal_state_is_stationary(ops):
    rho = (ops.QS / 2 + ops.QT / 6) / 2
    out = rhs_quantum(rho, np.zeros((8, 8)), 0.05, 3.5, 0.0, ops.QS, ops.QT, 2)
    # independent substitution: rho commutes with QS, so QS rho QS = QS rho
    QSr = ops.QS @ rho
    assert np.max(np.abs(ops.QS @ rho - rho @ ops.QS)) <= 1e-15
    assert np.max(np.abs(QSr @ ops.QS - QSr)) <= 1e-15
    assert np.max(np.abs(out)) <= 1e-15


def test_block_diagonal_non_uniform_state_is_stationary_without_relaxation(ops):
    rho = 0.3 * ops.QS / 2 + 0.7 * ops.QT / 6
    out = rhs_quantum(rho, np.zeros((8, 8)), 0.05, 3.5, 0.0, ops.QS, ops.QT, 2)
    assert np.max(np.abs(out)) <= 1e-15


@settings(max_examples=40, deadline=None)
@given(
    st.integers(0, 2**32 - 1),
    st.floats(0, 10),
    st.floats(0, 10),
    st.floats(0, 10),
)
def test_channel_merge_identity(seed, kS, kT, kSR):
    spec = SystemSpec((Nucleus(0.5, np.diag([8.0, 2.0, 0.0])),))
    o = build_space(spec)
    H = build_hamiltonian(spec, o, 49.0)
    rho = random_density(8, np.random.default_rng(seed))
    a = rhs_quantum(rho, H, kS, kT, kSR, o.QS, o.QT, o.n)
    b = rhs_quantum_two_channel(rho, H, kS, kT, kSR, o.QS, o.QT, o.n)
    assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, kS + kT + kSR)


def test_quantum_rhs_is_lindblad_form(ops, H49):
    rng = np.random.default_rng(4)
    rho = random_density(8, rng)
    kS, kT = 0.05, 3.5
    lind = -1j * (H49 @ rho - rho @ H49) - kS * lindblad_dissipator(ops.QS, rho) - kT * lindblad_dissipator(ops.QT, rho)
    np.testing.assert_allclose(rhs_quantum(rho, H49, kS, kT, 0.0, ops.QS, ops.QT, 2), lind, atol=1e-13)


def test_rhs_dim_mismatch(ops):
    with pytest.raises(ValueError):
        rhs_quantum(np.eye(4), np.zeros((8, 8)), 1, 1, 0, ops.QS, ops.QT, 2)
    with pytest.raises(ValueError):
        rhs_phenomenological(np.eye(4), np.zeros((8, 8)), 1, 1, 0, ops.QS, ops.QT)


# --- RK4 --------------------------------------------------------------------


def test_rk4_zero_rhs_is_identity(ops):
    rho = ops.QS / 2
    np.testing.assert_array_equal(step_rk4(rho, lambda r: np.zeros_like(r), 0.01), rho)


def test_rk4_fourth_order_convergence(ops, H49):
    rho0 = ops.QS / 2
    t_end = 2.0
    exact = expm(-1j * H49 * t_end) @ rho0 @ expm(1j * H49 * t_end)
    rhs = lambda r: -1j * (H49 @ r - r @ H49)

    def error(dt):
        r = rho0.astype(complex)
        for i in range(int(round(t_end / dt))):
            r = step_rk4(r, rhs, dt, i)
        return np.max(np.abs(r - exact))

    e1, e2, e3 = error(0.08), error(0.04), error(0.02)
    assert 12 < e1 / e2 < 20
    assert 12 < e2 / e3 < 20


def test_rk4_detects_blowup():
    with pytest.raises(IntegrationError, match="step 7"):
        step_rk4(np.eye(2, dtype=complex), lambda r: np.full_like(r, np.nan), 0.1, step_index=7)


# --- jump probabilities -----------------------------------------------------


def test_jump_probabilities_singlet(ops):
    pS, pT = jump_probabilities(ops.QS / 2, 0.05, 3.5, ops.QS, ops.QT, 1e-3)
    assert pS == pytest.approx(2 * 0.05 * 1e-3, rel=1e-14)
    assert pT == pytest.approx(0.0, abs=1e-17)


def test_jump_probabilities_mixed(ops):
    pS, pT = jump_probabilities(np.eye(8) / 8, 0.2, 3.0, ops.QS, ops.QT, 1e-3)
    assert pS == pytest.approx(2 * 0.2 * 1e-3 / 4, rel=1e-13)
    assert pT == pytest.approx(2 * 3.0 * 1e-3 * 3 / 4, rel=1e-13)


def test_jump_probabilities_equal_rates_independent_of_state(ops):
    rng = np.random.default_rng(5)
    for _ in range(10):
        pS, pT = jump_probabilities(random_density(8, rng), 1.5, 1.5, ops.QS, ops.QT, 1e-3)
        assert pS + pT == pytest.approx(3.0 * 1e-3, rel=1e-12)


def test_jump_probabilities_dt_too_large(ops):
    with pytest.raises(TimeStepError):
        jump_probabilities(np.eye(8) / 8, 0.0, 10.0, ops.QS, ops.QT, 0.2)


# --- propagate --------------------------------------------------------------


@pytest.mark.parametrize("theory", [QUANTUM, PHENOMENOLOGICAL])
def test_closed_form_singlet_decay(bare_spec, theory):
    traj = propagate(bare_spec, SimParams(kS=0.05, theory=theory))
    expected = np.exp(-0.1 * traj.times)
    np.testing.assert_allclose(traj.absorption, expected, rtol=1e-6)
    assert traj.absorption[-1] == pytest.approx(math.exp(-1.0), rel=1e-6)


def test_literal_recursion_is_first_order(bare_spec):
    # N_k = (1 - 0.1 dt)^k exactly when rho stays in the singlet
    p = SimParams(kS=0.05, theory=QUANTUM)
    traj = propagate(bare_spec, p, survival=RECURSION)
    k = np.arange(len(traj.times))
    np.testing.assert_allclose(traj.N, (1 - 0.1 * p.dt) ** k, rtol=1e-12)
    rel = abs(traj.N[-1] / math.exp(-1) - 1)
    # leading error term is t * (0.1)^2 dt / 2 = 5e-5
    assert rel == pytest.approx(5e-5, rel=1e-2)


def test_recursion_and_continuous_agree_to_first_order(paper_spec, fig2b_params):
    a = propagate(paper_spec, fig2b_params.replace(t_max=3.0))
    b = propagate(paper_spec, fig2b_params.replace(t_max=3.0), survival=RECURSION)
    assert np.max(np.abs(a.N - b.N)) < 1e-2


def test_quantum_trajectory_invariants(paper_spec, fig2b_params):
    traj = propagate(paper_spec, fig2b_params, rho_stride=250)
    assert np.max(np.abs(traj.trace - 1)) <= 1e-9
    assert np.max(np.abs(traj.S + traj.T - 1)) <= 1e-9
    assert np.all(np.diff(traj.N) <= 0)
    assert traj.N[0] == 1.0 and np.all((traj.N >= 0) & (traj.N <= 1))
    for rho in traj.rho_samples:
        assert np.linalg.eigvalsh(rho).min() >= -1e-8
        assert np.max(np.abs(rho - rho.conj().T)) == 0.0
    assert traj.rho_times[-1] == pytest.approx(10.0)


def test_phenomenological_trajectory_invariants(paper_spec, fig2b_params):
    traj = propagate(paper_spec, fig2b_params.replace(theory=PHENOMENOLOGICAL, kSR=1.0), rho_stride=500)
    np.testing.assert_array_equal(traj.N, traj.trace)
    assert np.all(np.diff(traj.trace) <= 0)
    for rho in traj.rho_samples:
        assert np.linalg.eigvalsh(rho).min() >= -1e-8


def test_phenomenological_trace_law_by_finite_differences(paper_spec, fig2b_params):
    p = fig2b_params.replace(theory=PHENOMENOLOGICAL, kSR=2.0)
    traj = propagate(paper_spec, p)
    h = p.dt
    i = np.arange(2, len(traj.times) - 2, 97)
    tr = traj.trace
    d = (-tr[i + 2] + 8 * tr[i + 1] - 8 * tr[i - 1] + tr[i - 2]) / (12 * h)
    law = -2 * p.kS * traj.S[i] - 2 * p.kT * traj.T[i] - p.kSR * tr[i]
    np.testing.assert_allclose(d, law, rtol=1e-6)


def test_relaxation_fixed_point(bare_spec):
    kSR = 3.0
    traj = propagate(bare_spec, SimParams(kSR=kSR, t_max=3.0), rho_stride=1)
    target = np.eye(8) / 8
    dist = np.array([np.linalg.norm(r - target) for r in traj.rho_samples])
    np.testing.assert_allclose(dist, dist[0] * np.exp(-kSR * traj.times), rtol=1e-9)
    half = np.interp(dist[0] / 2, dist[::-1], traj.rho_times[::-1])
    assert half == pytest.approx(math.log(2) / kSR, rel=0.05)


def test_zeno_slows_singlet_triplet_mixing(paper_spec):
    # the measurement rate kS + kT suppresses conversion out of the singlet
    T_at_1us = {}
    for kT in (4.0, 40.0):
        traj = propagate(paper_spec, SimParams(kT=kT, t_max=1.0))
        T_at_1us[kT] = traj.T[-1]
    assert T_at_1us[40.0] < 0.5 * T_at_1us[4.0]


def test_rho_stride_records_last_sample(paper_spec):
    traj = propagate(paper_spec, SimParams(kT=1.0, t_max=0.05), rho_stride=7)
    assert traj.rho_times[0] == 0.0
    assert traj.rho_times[-1] == pytest.approx(0.05)


# --- creation convolution ---------------------------------------------------


def test_convolution_of_constant():
    t = np.arange(10001) * 1e-3
    out = creation_convolution(np.ones_like(t), 4.0, t)
    np.testing.assert_allclose(out, 1 - np.exp(-4.0 * t), atol=1e-12)


def test_convolution_against_quadrature():
    t = np.arange(5001) * 1e-3
    f = lambda s: np.exp(-0.3 * s) * np.cos(2.0 * s)
    out = creation_convolution(f(t), 4.0, t)
    for ti in (0.1, 1.0, 2.5, 5.0):
        ref, _ = quad(lambda s: 4.0 * np.exp(-4.0 * s) * f(ti - s), 0, ti, epsabs=1e-13, epsrel=1e-13)
        i = int(round(ti / 1e-3))
        assert out[i] == pytest.approx(ref, abs=1e-6)


def test_convolution_delta_limit():
    t = np.arange(10001) * 1e-3
    N = np.exp(-0.5 * t) * (1 + 0.1 * np.sin(3 * t))
    out = creation_convolution(N, 1e6, t)
    assert np.max(np.abs(out[t >= 1e-4] - N[t >= 1e-4])) <= 1e-3


def test_convolution_small_kcr_series_branch():
    t = np.arange(101) * 1e-3
    out = creation_convolution(np.ones_like(t), 1e-3, t)
    np.testing.assert_allclose(out, -np.expm1(-1e-3 * t), rtol=1e-9, atol=1e-18)


def test_convolution_infinite_rate_is_identity():
    t = np.arange(5) * 0.1
    N = np.array([1.0, 0.9, 0.8, 0.7, 0.6])
    np.testing.assert_array_equal(creation_convolution(N, math.inf, t), N)


def test_propagate_applies_creation_kinetics(paper_spec, fig2b_params):
    p = fig2b_params.replace(t_max=2.0, kCR=4.0)
    traj = propagate(paper_spec, p)
    np.testing.assert_allclose(traj.N, creation_convolution(traj.N_instant, 4.0, traj.times))
    np.testing.assert_array_equal(traj.absorption, traj.N)
    assert traj.N[0] == 0.0


# --- Liouvillian oracle -----------------------------------------------------


def test_vec_identity():
    rng = np.random.default_rng(6)
    A, B, R = (rng.normal(size=(3, 3)) for _ in range(3))
    np.testing.assert_allclose(np.kron(B.T, A) @ vec(R), vec(A @ R @ B), atol=1e-13)
    np.testing.assert_array_equal(unvec(vec(R), 3), R)


def test_zero_liouvillian(bare_spec):
    L = liouvillian_matrix(bare_spec, SimParams())
    assert np.count_nonzero(L) == 0


@pytest.mark.parametrize("kSR", [0.0, 1.3])
def test_quantum_liouvillian_trace_row_vanishes(paper_spec, fig2b_params, kSR):
    L = liouvillian_matrix(paper_spec, fig2b_params.replace(kSR=kSR))
    assert np.max(np.abs(vec(np.eye(8)) @ L)) <= 1e-10


@pytest.mark.parametrize("theory", [QUANTUM, PHENOMENOLOGICAL])
def test_liouvillian_matches_rhs(paper_spec, ops, fig2b_params, theory):
    p = fig2b_params.replace(theory=theory, kSR=0.8)
    L = liouvillian_matrix(paper_spec, p)
    H = build_hamiltonian(paper_spec, ops, p.B_field)
    rng = np.random.default_rng(7)
    for _ in range(5):
        rho = random_density(8, rng)
        if theory == QUANTUM:
            direct = rhs_quantum(rho, H, p.kS, p.kT, p.kSR, ops.QS, ops.QT, ops.n)
        else:
            direct = rhs_phenomenological(rho, H, p.kS, p.kT, p.kSR, ops.QS, ops.QT)
        np.testing.assert_allclose(unvec(L @ vec(rho), 8), direct, atol=1e-12)


@pytest.mark.parametrize("theory", [QUANTUM, PHENOMENOLOGICAL])
@pytest.mark.parametrize(
    "spec",
    [
        SystemSpec(()),
        SystemSpec((Nucleus(0.5, np.diag([8.0, 2.0, 0.0])),)),
        SystemSpec((Nucleus(1.0, np.diag([3.0, 1.0, 0.5])),)),
        SystemSpec((Nucleus(0.5, np.diag([8.0, 2.0, 0.0])), Nucleus(0.5, np.eye(3) * 1.5, 2))),
    ],
    ids=["dim4", "dim8", "dim12", "dim16"],
)
def test_rk4_matches_matrix_exponential(spec, theory):
    p = SimParams(kS=0.05, kT=3.5, kSR=0.5, B_field=(10.0, 0.0, 49.0), theory=theory, t_max=3.0)
    traj = propagate(spec, p, rho_stride=1000)
    exact = propagate_exact(spec, p, traj.rho_times)
    for rho, ref in zip(traj.rho_samples, exact):
        assert np.max(np.abs(rho - ref)) <= 1e-6


def test_liouvillian_capacity():
    spec = SystemSpec(tuple(Nucleus(0.5) for _ in range(5)))  # dim 128, dim^2 > 4096
    with pytest.raises(CapacityError):
        liouvillian_matrix(spec, SimParams())
