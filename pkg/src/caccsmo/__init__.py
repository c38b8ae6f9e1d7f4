"""Sliding-mode-observer toolkit for a two-car CACC platoon under cyber-attack.

Builds the filter-extended plant model, runs the switching observer with an
event-driven no-false-alarm threshold, reconstructs quantifiable attacks
from the filtered injection, synthesizes stealthy attacks, and simulates
the closed loop deterministically.
"""

from .attacks import AttackClass, AttackScenario, SignalSpec, classify, make_stealthy, zero_scenario
from .extended import (
    OutputPartition,
    build_extended,
    build_partitioned,
    check_pole_pair,
    check_rank_condition,
    enumerate_valid_designs,
)
from .observer import ObserverParams
from .platoon import CarParams, NoiseSpec, PlatoonParams, PlatoonState
from .sim import SimConfig, SimSystem, compare_runs, run, run_batch

__version__ = "0.1.0"

__all__ = [
    "AttackClass", "AttackScenario", "SignalSpec", "classify", "make_stealthy",
    "zero_scenario", "OutputPartition", "build_extended", "build_partitioned",
    "check_pole_pair", "check_rank_condition", "enumerate_valid_designs",
    "ObserverParams", "CarParams", "NoiseSpec", "PlatoonParams", "PlatoonState",
    "SimConfig", "SimSystem", "compare_runs", "run", "run_batch", "__version__",
]
