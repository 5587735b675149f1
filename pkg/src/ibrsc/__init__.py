"""Phasor-domain power flow and steady-state short-circuit analysis of
three-phase networks with inverter-based resources.

The pipeline is ``solve_pf`` (Newton power flow on an augmented nodal
formulation), ``ibrsc.linearize.linearize`` (steady-state model that
reproduces the power flow), and ``solve_sc`` (fault stamping plus an outer
loop that updates the current-limited converter injections).
"""
from .frt import IbrOperatingPoint, csm_conventional, csm_improved, i1_max_from_i2, vic_virtual_resistance
from .io import emit_report, parse_network, parse_scenario, serialize_network
from .linearize import LinearizedNetwork, thevenin_at
from .mana import NonConvergence, PfSolution, solve_pf
from .netmodel import (
    Branch,
    Bus,
    Generator,
    IbrUnit,
    Load,
    NetworkError,
    NetworkModel,
    Regulator,
    SourceIdeal,
    Switch,
    Transformer,
    validate,
)
from .scsolver import FaultSpec, ScOptions, ScResult, apply_fault, solve_sc, sweep
from .seq import to_phase, to_sequence

__version__ = "0.1.0"

__all__ = [
    "Branch", "Bus", "Generator", "IbrUnit", "Load", "NetworkError", "NetworkModel", "Regulator",
    "SourceIdeal", "Switch", "Transformer", "validate",
    "to_phase", "to_sequence",
    "NonConvergence", "PfSolution", "solve_pf",
    "LinearizedNetwork", "thevenin_at",
    "IbrOperatingPoint", "csm_conventional", "csm_improved", "i1_max_from_i2", "vic_virtual_resistance",
    "FaultSpec", "ScOptions", "ScResult", "apply_fault", "solve_sc", "sweep",
    "emit_report", "parse_network", "parse_scenario", "serialize_network",
]
