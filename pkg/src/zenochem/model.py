"""Magnetic Hamiltonian and simulation parameters.

Units throughout: time in μs, rates and frequencies in μs⁻¹, field in μT.
The electron Larmor parameter is ``omega = 0.014 * |B|`` μs⁻¹ per μT
(1.4 MHz/G read literally, no 2π), scaled by ``omega_scale``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spin_algebra import SpinOperatorSet, SystemSpec, ValidationError

# 1.4 MHz/G = 1.4 μs⁻¹ per 100 μT
GAMMA_E = 0.014

QUANTUM = "quantum"
PHENOMENOLOGICAL = "phenomenological"
THEORIES = (QUANTUM, PHENOMENOLOGICAL)

STABILITY_LIMIT = 0.1


def as_field_vector(B) -> np.ndarray:
    """Scalar B means B along z."""
    arr = np.asarray(B, dtype=float)
    if arr.ndim == 0:
        return np.array([0.0, 0.0, float(arr)])
    if arr.shape != (3,):
        raise ValidationError(f"field must be a scalar or a 3-vector, got shape {arr.shape}")
    return arr.copy()


@dataclass(frozen=True)
class SimParams:
    kS: float = 0.0
    kT: float = 0.0
    kSR: float = 0.0
    kCR: float = math.inf
    B_field: tuple[float, float, float] = (0.0, 0.0, 0.0)
    theory: str = QUANTUM
    t_max: float = 10.0
    dt: float = 1e-3
    omega_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "B_field", tuple(as_field_vector(self.B_field)))
        for name in ("kS", "kT", "kSR"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValidationError(f"{name} must be finite and >= 0, got {v}")
        if not (self.kCR > 0) or math.isnan(self.kCR):
            raise ValidationError(f"kCR must be > 0 or inf, got {self.kCR}")
        if self.theory not in THEORIES:
            raise ValidationError(f"theory must be one of {THEORIES}, got {self.theory!r}")
        if not all(math.isfinite(b) for b in self.B_field):
            raise ValidationError("field components must be finite")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValidationError(f"dt must be > 0, got {self.dt}")
        if not (math.isfinite(self.t_max) and self.t_max >= 0):
            raise ValidationError(f"t_max must be >= 0, got {self.t_max}")
        if not (math.isfinite(self.omega_scale) and self.omega_scale >= 0):
            raise ValidationError(f"omega_scale must be >= 0, got {self.omega_scale}")
        load = self.dt * (2 * self.kS + 2 * self.kT + self.kSR)
        if load >= STABILITY_LIMIT:
            raise ValidationError(
                f"dt*(2kS+2kT+kSR) = {load:.3g} violates the explicit-stepping guard < {STABILITY_LIMIT}"
            )

    @property
    def instantaneous_creation(self) -> bool:
        return math.isinf(self.kCR)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def replace(self, **changes) -> "SimParams":
        from dataclasses import replace

        return replace(self, **changes)


def larmor(B_field, omega_scale: float = 1.0) -> np.ndarray:
    """Zeeman angular-frequency vector (μs⁻¹) for a field in μT."""
    return GAMMA_E * omega_scale * as_field_vector(B_field)


def build_hamiltonian(
    spec: SystemSpec, ops: SpinOperatorSet, B_field, omega_scale: float = 1.0
) -> np.ndarray:
    """Zeeman term on both electrons plus I·A·s hyperfine for each nucleus."""
    if ops.dim != spec.dim:
        raise ValidationError(f"operator set dimension {ops.dim} does not match spec {spec.dim}")
    w = larmor(B_field, omega_scale)
    H = np.zeros((spec.dim, spec.dim), dtype=complex)
    for a in range(3):
        if w[a]:
            H += w[a] * (ops.s1[a] + ops.s2[a])
    for nuc, I in zip(spec.nuclei, ops.nuclear):
        s = ops.electron(nuc.coupled_electron)
        A = nuc.hyperfine
        for a in range(3):
            for b in range(3):
                if A[a, b]:
                    H += A[a, b] * (I[a] @ s[b])
    return (H + H.conj().T) / 2


def initial_state(ops: SpinOperatorSet, n: int | None = None) -> np.ndarray:
    """Singlet electron pair with fully mixed nuclei: QS / n."""
    n = ops.n if n is None else n
    return ops.QS / n
