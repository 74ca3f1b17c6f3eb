"""Simulator for a three-user secure quantum summation protocol on single-particle states."""
from .adversary import (
    AttackKind,
    AttackStrategy,
    EveUnitaryParams,
    closed_form_detection,
    entangle_measure_detection,
    entangle_measure_leakage,
)
from .harness import RunSpec, efficiency_table, monte_carlo, qubit_efficiency
from .kernels import BACKEND
from .protocol import ProtocolConfig, Transcript, run_protocol
from .quantum_core import Basis, BellOutcome, RngStream, SingleState

__version__ = "0.1.0"

__all__ = [
    "AttackKind",
    "AttackStrategy",
    "BACKEND",
    "Basis",
    "BellOutcome",
    "EveUnitaryParams",
    "ProtocolConfig",
    "RngStream",
    "RunSpec",
    "SingleState",
    "Transcript",
    "closed_form_detection",
    "efficiency_table",
    "entangle_measure_detection",
    "entangle_measure_leakage",
    "monte_carlo",
    "qubit_efficiency",
    "run_protocol",
]
