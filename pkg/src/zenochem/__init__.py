"""Radical-ion-pair spin dynamics under phenomenological and quantum-measurement master equations."""

from .experiments import MfeCurve, Scenario, builtin_scenarios, mfe, relaxation_sweep, run_scenario
from .model import PHENOMENOLOGICAL, QUANTUM, SimParams, build_hamiltonian, initial_state
from .propagation import Trajectory, liouvillian_matrix, propagate, propagate_exact
from .spin_algebra import CapacityError, Nucleus, SystemSpec, ValidationError, build_space, expectation, kron

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "MfeCurve",
    "Nucleus",
    "PHENOMENOLOGICAL",
    "QUANTUM",
    "Scenario",
    "SimParams",
    "SystemSpec",
    "Trajectory",
    "ValidationError",
    "build_hamiltonian",
    "build_space",
    "builtin_scenarios",
    "expectation",
    "initial_state",
    "kron",
    "liouvillian_matrix",
    "mfe",
    "propagate",
    "propagate_exact",
    "relaxation_sweep",
    "run_scenario",
]
