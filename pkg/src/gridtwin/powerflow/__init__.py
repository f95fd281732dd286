from .kernels import CONVERGED, MAX_ITER, NONFINITE, SINGULAR
from .solver import (
    BatchResult,
    BranchResults,
    OperatingPoint,
    OperatingSeries,
    PowerFlowDiverged,
    PowerFlowError,
    PowerFlowSolution,
    SingularJacobian,
    SolverOptions,
    bus_injections,
    compute_branch_results,
    power_mismatch,
    series_current_sq,
    slack_injection,
    solve_batch,
    solve_power_flow,
)

__all__ = [
    "CONVERGED", "MAX_ITER", "NONFINITE", "SINGULAR",
    "BatchResult", "BranchResults", "OperatingPoint", "OperatingSeries", "PowerFlowDiverged",
    "PowerFlowError", "PowerFlowSolution", "SingularJacobian", "SolverOptions", "bus_injections",
    "compute_branch_results", "power_mismatch", "series_current_sq", "slack_injection",
    "solve_batch", "solve_power_flow",
]
