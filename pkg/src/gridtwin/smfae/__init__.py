"""Security management and flexibility activation: AC-constrained P/Q redispatch."""
from .engine import (
    INFEASIBLE,
    OPTIMAL,
    SOLVER_FAILURE,
    SetpointSchedule,
    Verification,
    solve,
    verify,
    write_deltas_csv,
)
from .formulation import RedispatchConfig, RedispatchError, RedispatchProblem, build_problem
from .ipm import IPMOptions, IPMResult, solve_nlp

__all__ = [
    "INFEASIBLE", "OPTIMAL", "SOLVER_FAILURE", "IPMOptions", "IPMResult", "RedispatchConfig",
    "RedispatchError", "RedispatchProblem", "SetpointSchedule", "Verification", "build_problem",
    "solve", "solve_nlp", "verify", "write_deltas_csv",
]
