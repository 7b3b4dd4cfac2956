"""Massively-parallel-computation simulation: machines, rounds, budgets."""

from .sim import HEADER_WORDS, MachineStore, Sim, SimConfig, scatter_placement

__all__ = [
    "HEADER_WORDS",
    "MachineStore",
    "Sim",
    "SimConfig",
    "scatter_placement",
]
