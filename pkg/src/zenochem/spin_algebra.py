"""Spin operators and singlet/triplet projectors for a radical-ion pair.

Tensor-factor ordering is fixed as::

    electron1 ⊗ electron2 ⊗ nucleus1 ⊗ nucleus2 ⊗ ...

with nuclei in declaration order. Spin matrices are dimensionless
(eigenvalues m = I, I-1, ..., -I) so that ``1/4 - s1.s2`` is an exact
projector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

DEFAULT_DIM_CAP = 4096


class ValidationError(ValueError):
    """Invalid physical input (spins, tensors, rates, grids)."""


class CapacityError(ValidationError):
    """Hilbert-space dimension exceeds the configured cap."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Nucleus:
    spin: float
    hyperfine: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    coupled_electron: int = 1

    def __post_init__(self):
        twice = 2 * float(self.spin)
        if not np.isfinite(twice) or twice < 1 - 1e-12 or abs(twice - round(twice)) > 1e-12:
            raise ValidationError(f"nuclear spin must be a half-integer >= 1/2, got {self.spin}")
        a = np.array(self.hyperfine, dtype=float)
        if a.shape != (3, 3):
            raise ValidationError(f"hyperfine tensor must be 3x3, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValidationError("hyperfine tensor has non-finite entries")
        if self.coupled_electron not in (1, 2):
            raise ValidationError(f"coupled_electron must be 1 or 2, got {self.coupled_electron}")
        object.__setattr__(self, "hyperfine", _readonly(a))

    @property
    def multiplicity(self) -> int:
        return int(round(2 * self.spin)) + 1


@dataclass(frozen=True)
class SystemSpec:
    """Two electrons plus an ordered list of magnetic nuclei."""

    nuclei: tuple[Nucleus, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nuclei", tuple(self.nuclei))

    @property
    def n(self) -> int:
        """Nuclear spin multiplicity, the product of (2I+1)."""
        return int(np.prod([nuc.multiplicity for nuc in self.nuclei], dtype=np.int64))

    @property
    def dim(self) -> int:
        return 4 * self.n

    @property
    def factor_dims(self) -> list[int]:
        return [2, 2] + [nuc.multiplicity for nuc in self.nuclei]


def spin_matrices(spin: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (Sx, Sy, Sz) for a single spin, basis ordered m = I ... -I."""
    d = int(round(2 * spin)) + 1
    m = spin - np.arange(d)
    sz = np.diag(m).astype(complex)
    sp = np.zeros((d, d), dtype=complex)
    for i in range(1, d):
        # <m+1| S+ |m> with m = m[i]
        sp[i - 1, i] = np.sqrt(spin * (spin + 1) - m[i] * (m[i] + 1))
    sm = sp.conj().T
    return (sp + sm) / 2, (sp - sm) / 2j, sz


def kron(a: np.ndarray, b: np.ndarray, *, cap: int = DEFAULT_DIM_CAP) -> np.ndarray:
    """Kronecker product of two square matrices, refusing results above ``cap``."""
    a = np.asarray(a)
    b = np.asarray(b)
    d = a.shape[0] * b.shape[0]
    if d > cap:
        raise CapacityError(f"kron result dimension {d} exceeds cap {cap}")
    return np.kron(a, b)


def embed(op: np.ndarray, site: int, dims: list[int], *, cap: int = DEFAULT_DIM_CAP) -> np.ndarray:
    """Place a single-factor operator at ``site`` with identities elsewhere."""
    factors = [op if i == site else np.eye(d, dtype=complex) for i, d in enumerate(dims)]
    return reduce(lambda x, y: kron(x, y, cap=cap), factors)


@dataclass(frozen=True)
class SpinOperatorSet:
    s1: tuple[np.ndarray, np.ndarray, np.ndarray]
    s2: tuple[np.ndarray, np.ndarray, np.ndarray]
    nuclear: tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...]
    QS: np.ndarray
    QT: np.ndarray
    n: int

    @property
    def dim(self) -> int:
        return self.QS.shape[0]

    @property
    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)

    # convenience aliases
    s1x = property(lambda self: self.s1[0])
    s1y = property(lambda self: self.s1[1])
    s1z = property(lambda self: self.s1[2])
    s2x = property(lambda self: self.s2[0])
    s2y = property(lambda self: self.s2[1])
    s2z = property(lambda self: self.s2[2])

    def electron(self, which: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.s1 if which == 1 else self.s2


def build_space(spec: SystemSpec, *, cap: int = DEFAULT_DIM_CAP) -> SpinOperatorSet:
    """Build electron, nuclear and projector operators on the full 4n space."""
    if spec.dim > cap:
        raise CapacityError(f"Hilbert dimension {spec.dim} exceeds cap {cap}")
    dims = spec.factor_dims
    half = spin_matrices(0.5)
    s1 = tuple(_readonly(embed(s, 0, dims, cap=cap)) for s in half)
    s2 = tuple(_readonly(embed(s, 1, dims, cap=cap)) for s in half)
    nuclear = tuple(
        tuple(_readonly(embed(s, 2 + j, dims, cap=cap)) for s in spin_matrices(nuc.spin))
        for j, nuc in enumerate(spec.nuclei)
    )
    s1s2 = sum(a @ b for a, b in zip(s1, s2))
    eye = np.eye(spec.dim, dtype=complex)
    QS = eye / 4 - s1s2
    QT = 3 * eye / 4 + s1s2
    return SpinOperatorSet(s1, s2, nuclear, _readonly(QS), _readonly(QT), spec.n)


def expectation(rho: np.ndarray, obs: np.ndarray, *, check_hermitian: bool = True) -> float:
    """Re Tr(rho obs). For Hermitian ``obs`` the imaginary residue must be negligible."""
    rho = np.asarray(rho)
    obs = np.asarray(obs)
    if rho.shape != obs.shape:
        raise ValueError(f"dimension mismatch: rho {rho.shape} vs observable {obs.shape}")
    # Tr(AB) without forming the product
    val = np.einsum("ij,ji->", rho, obs)
    if check_hermitian and abs(val.imag) > 1e-10 and np.allclose(obs, obs.conj().T, atol=1e-12):
        raise ValueError(f"expectation of Hermitian observable has imaginary part {val.imag:.3e}")
    return float(val.real)
