"""Invariant and oracle checks run by ``zenochem validate``."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .experiments import Scenario, mfe, paper_params, paper_system
from .model import PHENOMENOLOGICAL, QUANTUM, SimParams, build_hamiltonian
from .propagation import (
    propagate,
    propagate_exact,
    rhs_quantum,
    rhs_quantum_two_channel,
)
from .spin_algebra import Nucleus, SystemSpec, build_space


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str


def _systems():
    A = np.diag([8.0, 2.0, 0.0])
    return {
        "no nuclei": SystemSpec(()),
        "one spin-1/2": SystemSpec((Nucleus(0.5, A),)),
        "one spin-1": SystemSpec((Nucleus(1.0, A),)),
        "two spin-1/2": SystemSpec((Nucleus(0.5, A), Nucleus(0.5, A, 2))),
    }


def _maxabs(a) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def check_projectors():
    worst = 0.0
    for spec in _systems().values():
        ops = build_space(spec)
        QS, QT, eye = ops.QS, ops.QT, ops.identity
        worst = max(
            worst,
            _maxabs(QS @ QS - QS),
            _maxabs(QT @ QT - QT),
            _maxabs(QS @ QT),
            _maxabs(QT @ QS),
            _maxabs(QS + QT - eye),
            abs(np.trace(QS) - spec.n),
            abs(np.trace(QT) - 3 * spec.n),
        )
    return worst <= 1e-12, f"max deviation {worst:.2e}"


def check_singlet_oracle():
    singlet = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)
    worst = 0.0
    for spec in _systems().values():
        ref = np.kron(np.outer(singlet, singlet.conj()), np.eye(spec.n))
        worst = max(worst, _maxabs(build_space(spec).QS - ref))
    return worst <= 1e-12, f"max deviation {worst:.2e}"


def check_commutators():
    worst = 0.0
    for spec in _systems().values():
        ops = build_space(spec)
        for x, y, z in [ops.s1, ops.s2, *ops.nuclear]:
            for a, b, c in ((x, y, z), (y, z, x), (z, x, y)):
                worst = max(worst, _maxabs(a @ b - b @ a - 1j * c))
    return worst <= 1e-12, f"max deviation {worst:.2e}"


def check_hamiltonian(seed: int = 7):
    rng = np.random.default_rng(seed)
    worst_h, worst_c = 0.0, 0.0
    for _ in range(20):
        spec = SystemSpec((Nucleus(0.5, rng.normal(size=(3, 3)) * 5),))
        ops = build_space(spec)
        H = build_hamiltonian(spec, ops, rng.normal(size=3) * 100)
        worst_h = max(worst_h, _maxabs(H - H.conj().T))
        bare = SystemSpec((Nucleus(0.5, np.zeros((3, 3))),))
        ops0 = build_space(bare)
        H0 = build_hamiltonian(bare, ops0, rng.normal(size=3) * 100)
        worst_c = max(worst_c, _maxabs(H0 @ ops0.QS - ops0.QS @ H0))
    ok = worst_h <= 1e-12 and worst_c <= 1e-12
    return ok, f"hermiticity {worst_h:.2e}, [H,QS] with A=0 {worst_c:.2e}"


def check_channel_merge(seed: int = 11):
    rng = np.random.default_rng(seed)
    spec = paper_system()
    ops = build_space(spec)
    H = build_hamiltonian(spec, ops, (0, 0, 49))
    worst = 0.0
    for _ in range(20):
        X = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        rho = X @ X.conj().T
        rho /= np.trace(rho)
        kS, kT, kSR = rng.uniform(0, 5, size=3)
        a = rhs_quantum(rho, H, kS, kT, kSR, ops.QS, ops.QT, ops.n)
        b = rhs_quantum_two_channel(rho, H, kS, kT, kSR, ops.QS, ops.QT, ops.n)
        worst = max(worst, _maxabs(a - b))
    return worst <= 1e-12, f"max deviation {worst:.2e}"


def _fig2b(theory, **kw) -> SimParams:
    return paper_params(B_field=(0, 0, 49.0), theory=theory, **kw)


def check_quantum_trace():
    traj = propagate(paper_system(), _fig2b(QUANTUM))
    dev = _maxabs(traj.trace - 1)
    dev_st = _maxabs(traj.S + traj.T - 1)
    return max(dev, dev_st) <= 1e-9, f"max |Tr rho - 1| = {dev:.2e}, max |S+T-1| = {dev_st:.2e}"


def check_trace_law(seed: int = 3):
    p = _fig2b(PHENOMENOLOGICAL, kSR=0.5)
    traj = propagate(paper_system(), p)
    rng = np.random.default_rng(seed)
    idx = rng.integers(2, len(traj.times) - 2, size=100)
    h = p.dt
    tr = traj.trace
    # fourth-order central difference
    d = (-tr[idx + 2] + 8 * tr[idx + 1] - 8 * tr[idx - 1] + tr[idx - 2]) / (12 * h)
    law = -2 * p.kS * traj.S[idx] - 2 * p.kT * traj.T[idx] - p.kSR * tr[idx]
    rel = float(np.max(np.abs(d - law) / np.abs(law)))
    return rel <= 1e-6, f"max relative deviation {rel:.2e}"


def check_positivity():
    worst_eig, worst_h = 0.0, 0.0
    for theory in (QUANTUM, PHENOMENOLOGICAL):
        traj = propagate(paper_system(), _fig2b(theory), rho_stride=50)
        for rho in traj.rho_samples:
            worst_eig = min(worst_eig, float(np.linalg.eigvalsh(rho).min()))
            worst_h = max(worst_h, _maxabs(rho - rho.conj().T))
    return worst_eig >= -1e-8 and worst_h <= 1e-10, f"min eigenvalue {worst_eig:.2e}, hermiticity {worst_h:.2e}"


def check_oracle():
    worst = 0.0
    check_times = (1.0, 5.0, 10.0)
    for theory in (QUANTUM, PHENOMENOLOGICAL):
        p = _fig2b(theory)
        traj = propagate(paper_system(), p, rho_stride=1000)
        exact = propagate_exact(paper_system(), p, check_times)
        for t, ref in zip(check_times, exact):
            i = int(np.argmin(np.abs(traj.rho_times - t)))
            worst = max(worst, _maxabs(traj.rho_samples[i] - ref))
    return worst <= 1e-6, f"max elementwise deviation {worst:.2e}"


def check_closed_form():
    spec = SystemSpec(())
    worst = 0.0
    for theory in (QUANTUM, PHENOMENOLOGICAL):
        traj = propagate(spec, SimParams(kS=0.05, theory=theory))
        worst = max(worst, abs(traj.absorption[-1] / math.exp(-1.0) - 1))
    return worst <= 1e-6, f"relative error at 10 us {worst:.2e}"


def check_zeno():
    rates = {}
    for kT in (4.0, 40.0):
        traj = propagate(paper_system(), SimParams(kS=0.0, kT=kT, theory=QUANTUM))
        rates[kT] = -math.log(traj.N[-1]) / traj.times[-1]
    return rates[40.0] < rates[4.0], f"r(kT=4) = {rates[4.0]:.4g}/us, r(kT=40) = {rates[40.0]:.4g}/us"


def check_relaxation_fixed_point():
    kSR = 2.0
    p = SimParams(kSR=kSR, t_max=2.0, theory=QUANTUM)
    spec = paper_system()
    spec0 = SystemSpec((Nucleus(0.5, np.zeros((3, 3))),))
    traj = propagate(spec0, p, rho_stride=1)
    target = np.eye(spec.dim) / spec.dim
    dist = np.array([np.linalg.norm(r - target) for r in traj.rho_samples])
    half = math.log(2) / kSR
    crossing = float(np.interp(dist[0] / 2, dist[::-1], traj.rho_times[::-1]))
    rel = abs(crossing / half - 1)
    return rel <= 0.05, f"halving time {crossing:.4g} us vs ln2/kSR = {half:.4g} us"


def check_mfe_symmetry():
    scen = Scenario("check", paper_system(), paper_params(t_max=2.0), fields_uT=(0.0, 49.0))
    fwd = mfe(scen, 49.0, 0.0)
    back = mfe(scen, 0.0, 49.0)
    anti = _maxabs(fwd.values + back.values)
    bare = Scenario("bare", SystemSpec((Nucleus(0.5, np.zeros((3, 3))),)), paper_params(t_max=2.0), fields_uT=(0.0, 49.0))
    flat = _maxabs(mfe(bare, 49.0).values)
    ok = anti == 0.0 and abs(fwd.values[0]) <= 1e-9 and flat <= 1e-9
    return ok, f"antisymmetry residue {anti:.2e}, zero-coupling MFE {flat:.2e}"


PROPERTIES: list[tuple[str, Callable]] = [
    ("projector algebra", check_projectors),
    ("singlet projector vs explicit basis", check_singlet_oracle),
    ("spin commutation relations", check_commutators),
    ("hamiltonian hermiticity and [H,QS]=0 at A=0", check_hamiltonian),
    ("channel-merge identity", check_channel_merge),
    ("quantum trace preservation", check_quantum_trace),
    ("phenomenological trace law", check_trace_law),
    ("positivity and hermiticity of rho", check_positivity),
    ("RK4 vs matrix-exponential oracle", check_oracle),
    ("closed-form singlet decay", check_closed_form),
    ("zeno suppression of loss rate", check_zeno),
    ("relaxation fixed point", check_relaxation_fixed_point),
    ("MFE antisymmetry and zero-coupling MFE", check_mfe_symmetry),
]


def run_all(names=None) -> list[PropertyResult]:
    results = []
    for name, fn in PROPERTIES:
        if names and name not in names:
            continue
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(PropertyResult(name, bool(ok), detail))
    return results
