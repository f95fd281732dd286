"""Digital twin of an active distribution network.

Engines: real-time security assessment (:mod:`gridtwin.rsae`), N-1 contingency
screening (:mod:`gridtwin.cae`) and optimal P/Q redispatch
(:mod:`gridtwin.smfae`), fed by feeder measurements (:mod:`gridtwin.ingestion`)
and orchestrated by :mod:`gridtwin.harness`.
"""
from ._accel import backend_name
from .network import (
    BranchRef,
    DegenerateTopologyError,
    Network,
    NetworkError,
    apply_outage,
    build_admittance,
    compile_network,
    load_network,
)
from .powerflow import OperatingPoint, SolverOptions, solve_power_flow

__version__ = "0.1.0"

__all__ = [
    "BranchRef", "DegenerateTopologyError", "Network", "NetworkError", "OperatingPoint",
    "SolverOptions", "apply_outage", "backend_name", "build_admittance", "compile_network",
    "load_network", "solve_power_flow",
]
