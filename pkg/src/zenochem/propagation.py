"""Density-matrix propagation under the two master equations.

``propagate`` integrates with fixed-step RK4. The quantum theory keeps
Tr ρ = 1 and tracks the surviving-pair fraction N(t) separately from the
per-step recombination (jump) probabilities; the phenomenological theory
lets Tr ρ decay and reports N = Tr ρ.

``liouvillian_matrix``/``propagate_exact`` form an independent route to the
same dynamics (vectorized generator + matrix exponential) used as an oracle.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .model import PHENOMENOLOGICAL, QUANTUM, SimParams, build_hamiltonian, initial_state
from .spin_algebra import (
    DEFAULT_DIM_CAP,
    CapacityError,
    SystemSpec,
    build_space,
    expectation,
)

log = logging.getLogger(__name__)

TRACE_TOL = 1e-9
LIOUVILLE_CAP = 4096

CONTINUOUS = "continuous"
RECURSION = "recursion"


class IntegrationError(RuntimeError):
    """Non-finite values or a broken conservation law during stepping."""


class TimeStepError(ValueError):
    """Jump probabilities over one step exceed 1; dt is too large."""


def _commutator(H, rho):
    return H @ rho - rho @ H


def rhs_phenomenological(rho, H, kS, kT, kSR, QS, QT):
    """-i[H,ρ] - kS{ρ,QS} - kT{ρ,QT} - kSR ρ."""
    if rho.shape != H.shape or rho.shape != QS.shape:
        raise ValueError(f"dimension mismatch: rho {rho.shape}, H {H.shape}, QS {QS.shape}")
    out = -1j * _commutator(H, rho)
    if kS:
        out -= kS * (rho @ QS + QS @ rho)
    if kT:
        out -= kT * (rho @ QT + QT @ rho)
    if kSR:
        out -= kSR * rho
    return out


def rhs_quantum(rho, H, kS, kT, kSR, QS, QT, n):
    """Single-channel measurement form with total rate k = kS + kT.

    Relaxation drives towards the fully mixed state 1/(4n).
    """
    if rho.shape != H.shape or rho.shape != QS.shape:
        raise ValueError(f"dimension mismatch: rho {rho.shape}, H {H.shape}, QS {QS.shape}")
    out = -1j * _commutator(H, rho)
    k = kS + kT
    if k:
        QSrho = QS @ rho
        out -= k * (rho @ QS + QSrho - 2 * QSrho @ QS)
    if kSR:
        out -= kSR * rho
        out[np.diag_indices_from(out)] += kSR / (4 * n)
    return out


def rhs_quantum_two_channel(rho, H, kS, kT, kSR, QS, QT, n):
    """Separate singlet and triplet dissipators; must equal :func:`rhs_quantum`."""
    out = -1j * _commutator(H, rho)
    out -= kS * (rho @ QS + QS @ rho - 2 * QS @ rho @ QS)
    out -= kT * (rho @ QT + QT @ rho - 2 * QT @ rho @ QT)
    out -= kSR * (rho - np.eye(rho.shape[0]) / (4 * n))
    return out


def lindblad_dissipator(B, rho):
    """B†Bρ + ρB†B - 2BρB† (enters the generator with a minus sign)."""
    BdB = B.conj().T @ B
    return BdB @ rho + rho @ BdB - 2 * B @ rho @ B.conj().T


def rk4_stages(rho, rhs: Callable, dt: float):
    """One RK4 step. Returns the new state and the four stage states."""
    r1 = rho
    k1 = rhs(r1)
    r2 = rho + 0.5 * dt * k1
    k2 = rhs(r2)
    r3 = rho + 0.5 * dt * k2
    k3 = rhs(r3)
    r4 = rho + dt * k3
    k4 = rhs(r4)
    new = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return (new + new.conj().T) / 2, (r1, r2, r3, r4)


def step_rk4(rho, rhs: Callable, dt: float, step_index: int | None = None):
    """Classical RK4 step followed by re-Hermitization."""
    new, _ = rk4_stages(rho, rhs, dt)
    if not np.all(np.isfinite(new)):
        where = "" if step_index is None else f" at step {step_index}"
        raise IntegrationError(f"integration blew up{where}")
    return new


def jump_probabilities(rho, kS, kT, QS, QT, dt):
    """Singlet and triplet recombination probabilities within one step."""
    pS = 2 * kS * max(expectation(rho, QS), 0.0) * dt
    pT = 2 * kT * max(expectation(rho, QT), 0.0) * dt
    if pS + pT > 1:
        raise TimeStepError(f"pS + pT = {pS + pT:.3g} > 1; reduce dt (currently {dt})")
    return pS, pT


def creation_convolution(N_instant, kCR: float, times) -> np.ndarray:
    """Convolve an instantaneous-creation signal with kCR·exp(-kCR t).

    N is taken piecewise linear between grid points and the exponential
    kernel is integrated exactly on each interval, so the result is exact
    for N ≡ 1 and stays well behaved when 1/kCR is far below dt.
    """
    N = np.asarray(N_instant, dtype=float)
    t = np.asarray(times, dtype=float)
    if math.isinf(kCR):
        return N.copy()
    if N.shape != t.shape:
        raise ValueError("signal and grid lengths differ")
    out = np.zeros_like(N)
    if len(t) < 2:
        return out
    dt = t[1] - t[0]
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-15):
        raise ValueError("creation convolution requires a uniform grid")
    a = kCR * dt
    decay = math.exp(-a)
    one_minus = -math.expm1(-a)
    if a < 1e-4:
        # (1 - e^-a - a e^-a)/a, series to avoid cancellation
        w_old = a / 2 - a * a / 3 + a**3 / 8
    else:
        w_old = (one_minus - a * decay) / a
    w_new = one_minus - w_old
    y = 0.0
    for i in range(1, len(t)):
        y = decay * y + w_old * N[i - 1] + w_new * N[i]
        out[i] = y
    return out


@dataclass
class Trajectory:
    theory: str
    times: np.ndarray
    S: np.ndarray
    T: np.ndarray
    trace: np.ndarray
    N: np.ndarray
    N_instant: np.ndarray
    absorption: np.ndarray
    rho_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rho_samples: list = field(default_factory=list)


def _make_rhs(theory, H, params: SimParams, QS, QT, n):
    kS, kT, kSR = params.kS, params.kT, params.kSR
    if theory == QUANTUM:
        return lambda r: rhs_quantum(r, H, kS, kT, kSR, QS, QT, n)
    return lambda r: rhs_phenomenological(r, H, kS, kT, kSR, QS, QT)


def propagate(
    spec: SystemSpec,
    params: SimParams,
    *,
    rho_stride: int = 0,
    survival: str = CONTINUOUS,
    cap: int = DEFAULT_DIM_CAP,
) -> Trajectory:
    """Integrate from the singlet initial state over ``params.times``.

    ``survival`` selects how the quantum-theory population is advanced:
    ``"recursion"`` applies N ← N(1 - pS - pT) with probabilities from the
    state at the start of each step; ``"continuous"`` (default) uses the
    exact small-step limit of the same recursion, N ← N·exp(-(p̄S + p̄T)),
    with the probabilities averaged over the RK4 stages. The two agree to
    O(dt); only the latter reaches RK4 accuracy.

    ``rho_stride`` > 0 stores every stride-th density matrix (plus the last).
    """
    if survival not in (CONTINUOUS, RECURSION):
        raise ValueError(f"unknown survival mode {survival!r}")
    ops = build_space(spec, cap=cap)
    H = build_hamiltonian(spec, ops, params.B_field, params.omega_scale)
    QS, QT, n = ops.QS, ops.QT, ops.n
    theory = params.theory
    rhs = _make_rhs(theory, H, params, QS, QT, n)
    times = params.times
    nt = len(times)
    dt = params.dt

    S = np.empty(nt)
    T = np.empty(nt)
    tr = np.empty(nt)
    N = np.empty(nt)
    rho_times, rho_samples = [], []

    rho = np.array(initial_state(ops), dtype=complex)
    surv = 1.0
    for i in range(nt):
        S[i] = expectation(rho, QS)
        T[i] = expectation(rho, QT)
        tr[i] = float(np.trace(rho).real)
        if theory == QUANTUM:
            if abs(tr[i] - 1.0) > TRACE_TOL:
                raise IntegrationError(f"trace drifted to {tr[i]!r} at step {i} (t = {times[i]:g} us)")
            N[i] = surv
        else:
            N[i] = tr[i]
        if rho_stride and (i % rho_stride == 0 or i == nt - 1):
            rho_times.append(times[i])
            rho_samples.append(rho.copy())
        if i == nt - 1:
            break
        new, stages = rk4_stages(rho, rhs, dt)
        if not np.all(np.isfinite(new)):
            raise IntegrationError(f"integration blew up at step {i}")
        if theory == QUANTUM:
            if survival == RECURSION:
                pS, pT = jump_probabilities(rho, params.kS, params.kT, QS, QT, dt)
                surv *= 1.0 - pS - pT
            else:
                r1, r2, r3, r4 = stages
                rbar = (r1 + 2 * r2 + 2 * r3 + r4) / 6
                pS, pT = jump_probabilities(rbar, params.kS, params.kT, QS, QT, dt)
                surv *= math.exp(-(pS + pT))
        rho = new

    N_instant = N
    if params.instantaneous_creation:
        population = N.copy()
    else:
        population = creation_convolution(N, params.kCR, times)
    log.debug("propagated %s theory over %d steps", theory, nt - 1)
    return Trajectory(
        theory=theory,
        times=times,
        S=S,
        T=T,
        trace=tr,
        N=population,
        N_instant=N_instant,
        absorption=population.copy(),
        rho_times=np.array(rho_times),
        rho_samples=rho_samples,
    )


def vec(rho) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v, dim: int) -> np.ndarray:
    return np.asarray(v).reshape(dim, dim, order="F")


def _left(A):
    # vec(Aρ) = (1 ⊗ A) vec ρ
    return np.kron(np.eye(A.shape[0]), A)


def _right(B):
    # vec(ρB) = (Bᵀ ⊗ 1) vec ρ
    return np.kron(B.T, np.eye(B.shape[0]))


def _sandwich(A, B):
    # vec(AρB) = (Bᵀ ⊗ A) vec ρ
    return np.kron(B.T, A)


def liouvillian_matrix(spec: SystemSpec, params: SimParams, *, cap: int = LIOUVILLE_CAP) -> np.ndarray:
    """Vectorized generator L with vec(dρ/dt) = L vec(ρ).

    For the quantum theory the relaxation term is written as
    -kSR(ρ - Tr(ρ)·1/(4n)) so that L is linear; on normalized states this is
    the same as relaxing towards 1/(4n).
    """
    if spec.dim**2 > cap:
        raise CapacityError(f"Liouville dimension {spec.dim**2} exceeds cap {cap}")
    ops = build_space(spec)
    H = build_hamiltonian(spec, ops, params.B_field, params.omega_scale)
    QS, QT, n = ops.QS, ops.QT, ops.n
    d = spec.dim
    one = np.eye(d * d, dtype=complex)
    L = -1j * (_left(H) - _right(H))
    if params.theory == QUANTUM:
        for rate, Q in ((params.kS, QS), (params.kT, QT)):
            if rate:
                L -= rate * (_right(Q) + _left(Q) - 2 * _sandwich(Q, Q))
        if params.kSR:
            target = vec(np.eye(d) / (4 * n))
            trace_row = vec(np.eye(d))
            L -= params.kSR * (one - np.outer(target, trace_row))
    elif params.theory == PHENOMENOLOGICAL:
        for rate, Q in ((params.kS, QS), (params.kT, QT)):
            if rate:
                L -= rate * (_right(Q) + _left(Q))
        L -= params.kSR * one
    return L


def propagate_exact(spec: SystemSpec, params: SimParams, times) -> list[np.ndarray]:
    """ρ(t) = unvec(exp(L t) vec ρ₀) at each requested time."""
    L = liouvillian_matrix(spec, params)
    ops = build_space(spec)
    v0 = vec(initial_state(ops)).astype(complex)
    return [unvec(expm(L * t) @ v0, spec.dim) for t in times]
