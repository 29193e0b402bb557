"""Figure-level scenarios: magnetic-field-effect curves and relaxation sweeps.

A scenario compares transient absorption at several fields against a
reference field (the first listed). Every (theory, field, kSR) cell is an
independent propagation; cells may run on a thread pool whose size is capped
by ``ZENOCHEM_THREADS``. Results are merged by cell index, so output does
not depend on scheduling.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .model import PHENOMENOLOGICAL, QUANTUM, THEORIES, SimParams
from .propagation import Trajectory, propagate
from .spin_algebra import Nucleus, SystemSpec, ValidationError

MFE = "mfe"
TRANSIENT_ABSORPTION = "transient_absorption"
OUTPUT_KINDS = (TRANSIENT_ABSORPTION, MFE)

SIGN_THRESHOLD = 1e-6


@dataclass(frozen=True)
class Scenario:
    name: str
    spec: SystemSpec
    params: SimParams
    fields_uT: tuple[float, ...] = (0.0,)
    theories: tuple[str, ...] = (QUANTUM,)
    outputs: tuple[str, ...] = (MFE,)
    # per-field relaxation rate overriding params.kSR (high-field relaxation)
    field_ksr: dict = field(default_factory=dict)
    sweep_ksr: tuple[float, ...] = ()
    description: str = ""

    def __post_init__(self):
        fields = tuple(float(b) for b in self.fields_uT)
        if not fields:
            raise ValidationError(f"scenario {self.name!r}: fields_to_compare is empty")
        if fields.count(fields[0]) != 1:
            raise ValidationError(f"scenario {self.name!r}: reference field {fields[0]} listed more than once")
        if len(set(fields)) != len(fields):
            raise ValidationError(f"scenario {self.name!r}: duplicate fields")
        bad = [t for t in self.theories if t not in THEORIES]
        if bad or not self.theories:
            raise ValidationError(f"scenario {self.name!r}: bad theory list {self.theories}")
        bad = [o for o in self.outputs if o not in OUTPUT_KINDS]
        if bad:
            raise ValidationError(f"scenario {self.name!r}: unknown outputs {bad}")
        object.__setattr__(self, "fields_uT", fields)
        object.__setattr__(self, "theories", tuple(self.theories))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "field_ksr", {float(k): float(v) for k, v in self.field_ksr.items()})
        object.__setattr__(self, "sweep_ksr", tuple(float(k) for k in self.sweep_ksr))

    @property
    def reference_uT(self) -> float:
        return self.fields_uT[0]

    def params_for(self, B_uT: float, theory: str, kSR: float | None = None) -> SimParams:
        """Cell parameters: field along z, theory, and the effective kSR."""
        if kSR is None:
            kSR = self.field_ksr.get(float(B_uT), self.params.kSR)
        return replace(self.params, B_field=(0.0, 0.0, float(B_uT)), theory=theory, kSR=kSR)


@dataclass(frozen=True)
class MfeCurve:
    times: np.ndarray
    values: np.ndarray
    B_uT: float
    B_ref_uT: float
    theory: str
    kSR: float | None = None

    @property
    def label(self) -> str:
        s = f"{self.theory} B={self.B_uT:g}uT"
        if self.kSR is not None:
            s += f" kSR={self.kSR:g}"
        return s


def transient_absorption(traj: Trajectory) -> np.ndarray:
    """Surviving radical-pair population (creation kinetics already applied)."""
    return traj.absorption


def sign_changes(values, threshold: float = SIGN_THRESHOLD) -> int:
    v = np.asarray(values)
    s = np.sign(v[np.abs(v) > threshold])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def lobe_signs(values, threshold: float = SIGN_THRESHOLD) -> list[int]:
    """Sequence of signs of the successive lobes above threshold."""
    v = np.asarray(values)
    s = np.sign(v[np.abs(v) > threshold]).astype(int)
    if s.size == 0:
        return []
    keep = np.concatenate(([True], s[1:] != s[:-1]))
    return s[keep].tolist()


def peak_magnitude(values) -> float:
    return float(np.max(np.abs(values))) if len(values) else 0.0


def max_workers() -> int:
    env = os.environ.get("ZENOCHEM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"ZENOCHEM_THREADS must be an integer, got {env!r}") from None
    return min(8, os.cpu_count() or 1)


def run_cells(spec: SystemSpec, cells: list[SimParams], *, rho_stride: int = 0) -> list[Trajectory]:
    """Propagate independent parameter cells; results in cell order."""
    workers = min(max_workers(), len(cells))
    if workers <= 1:
        return [propagate(spec, p, rho_stride=rho_stride) for p in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda p: propagate(spec, p, rho_stride=rho_stride), cells))


def mfe_from(traj: Trajectory, ref: Trajectory) -> np.ndarray:
    if traj.times.shape != ref.times.shape or not np.array_equal(traj.times, ref.times):
        raise ValueError("trajectories are on different grids")
    return transient_absorption(traj) - transient_absorption(ref)


def mfe(
    scenario: Scenario,
    B_uT: float,
    B_ref_uT: float | None = None,
    *,
    theory: str | None = None,
    kSR: float | None = None,
) -> MfeCurve:
    """Absorption at ``B_uT`` minus absorption at the reference field."""
    B_ref_uT = scenario.reference_uT if B_ref_uT is None else B_ref_uT
    theory = theory or scenario.theories[0]
    cells = [scenario.params_for(B_uT, theory, kSR), scenario.params_for(B_ref_uT, theory, kSR)]
    if cells[0] == cells[1]:
        traj = propagate(scenario.spec, cells[0])
        values = np.zeros_like(traj.absorption)
        return MfeCurve(traj.times, values, float(B_uT), float(B_ref_uT), theory, kSR)
    traj, ref = run_cells(scenario.spec, cells)
    return MfeCurve(traj.times, mfe_from(traj, ref), float(B_uT), float(B_ref_uT), theory, kSR)


@dataclass
class ScenarioResult:
    scenario: Scenario
    # (theory, B) -> trajectory
    trajectories: dict
    # (theory, B) -> MfeCurve, for every non-reference field
    curves: dict
    kSR: float | None = None


def run_scenario(scenario: Scenario, *, kSR: float | None = None, rho_stride: int = 0) -> ScenarioResult:
    """Propagate every (theory, field) cell and form the MFE curves."""
    keys = [(th, B) for th in scenario.theories for B in scenario.fields_uT]
    cells = [scenario.params_for(B, th, kSR) for th, B in keys]
    trajs = run_cells(scenario.spec, cells, rho_stride=rho_stride)
    by_key = dict(zip(keys, trajs))
    curves = {}
    for th in scenario.theories:
        ref = by_key[(th, scenario.reference_uT)]
        for B in scenario.fields_uT[1:]:
            t = by_key[(th, B)]
            curves[(th, B)] = MfeCurve(t.times, mfe_from(t, ref), B, scenario.reference_uT, th, kSR)
    return ScenarioResult(scenario, by_key, curves, kSR)


def relaxation_sweep(scenario: Scenario, kSR_values=None) -> dict[str, list[MfeCurve]]:
    """MFE curves for each kSR and theory, keyed by theory.

    Each kSR applies to both the field and the reference propagation. Curves
    for every non-reference field are returned, ordered by kSR then field.
    """
    values = scenario.sweep_ksr if kSR_values is None else tuple(float(k) for k in kSR_values)
    if not values:
        raise ValidationError(f"scenario {scenario.name!r} has no kSR values to sweep")
    out: dict[str, list[MfeCurve]] = {th: [] for th in scenario.theories}
    for k in values:
        res = run_scenario(scenario, kSR=k)
        for th in scenario.theories:
            for B in scenario.fields_uT[1:]:
                out[th].append(res.curves[(th, B)])
    return out


# Single spin-1/2 nucleus, diagonal hyperfine tensor (8, 2, 0) μs⁻¹ on electron 1.
PAPER_HYPERFINE = np.diag([8.0, 2.0, 0.0])


def paper_system() -> SystemSpec:
    return SystemSpec((Nucleus(0.5, PAPER_HYPERFINE, 1),))


def paper_params(**overrides) -> SimParams:
    base = dict(kS=0.05, kT=3.5, kSR=0.0, kCR=math.inf, t_max=10.0, dt=1e-3)
    base.update(overrides)
    return SimParams(**base)


def builtin_scenarios() -> dict[str, Scenario]:
    spec = paper_system()
    scenarios = [
        Scenario(
            "fig2b-lowfield",
            spec,
            paper_params(),
            fields_uT=(0.0, 49.0, 39.0),
            theories=(QUANTUM,),
            outputs=(MFE,),
            description="low-field MFE at 49 and 39 uT, quantum-measurement theory",
        ),
        Scenario(
            "fig2c-lowfield-phenomenological",
            spec,
            paper_params(),
            fields_uT=(0.0, 49.0, 39.0),
            theories=(PHENOMENOLOGICAL,),
            outputs=(MFE,),
            description="low-field MFE at 49 and 39 uT, phenomenological theory",
        ),
        Scenario(
            "fig2-highfield",
            spec,
            # Zeeman frequency at 8 mT is 112/us; RK4 needs the finer step to keep rho positive
            paper_params(kCR=4.0, dt=5e-4),
            fields_uT=(0.0, 8000.0),
            theories=(QUANTUM, PHENOMENOLOGICAL),
            outputs=(TRANSIENT_ABSORPTION, MFE),
            field_ksr={8000.0: 1.0},
            description="8 mT transients with creation kinetics (kCR=4/us) and high-field kSR=1/us",
        ),
        Scenario(
            "fig3-relaxation",
            spec,
            paper_params(),
            fields_uT=(0.0, 49.0),
            theories=(QUANTUM, PHENOMENOLOGICAL),
            outputs=(MFE,),
            sweep_ksr=(0.0, 1.0, 10.0),
            description="49 uT MFE for kSR = 0, 1, 10 /us in both theories",
        ),
    ]
    return {s.name: s for s in scenarios}


def get_scenario(name: str) -> Scenario:
    table = builtin_scenarios()
    try:
        return table[name]
    except KeyError:
        raise ValidationError(f"unknown scenario {name!r}; known: {', '.join(table)}") from None
