"""Weighted half-space extensions: symbols, kernels and rigidity diagnostics."""

from .errors import (
    DegenerateFieldError,
    ExtrapolationError,
    MonotonicityError,
    ProfileConvergenceError,
    QuadratureError,
    TruncationError,
    WeightDomainError,
    WeightSpecError,
    WextError,
)
from .extension import (
    apply_trace_operator,
    energy_identity_check,
    extend,
    neumann_trace,
    poisson_convolve,
    verify_poisson_symbol,
    weak_residual,
)
from .fields import HalfSpaceField, TraceField, graded_levels, read_grid, read_trace, write_grid
from .rigidity import angle_fields, extract_direction, growth_statistic, rigidity_report, theta_residual
from .symbol import ProfileSolution, SymbolTable, compute_symbol, eval_symbol, profile_kernel, solve_profile
from .weights import A2Report, Weight, a2_diagnose, eval_weight, parse_weight, power_weight

__version__ = "0.1.0"

__all__ = [
    "A2Report", "DegenerateFieldError", "ExtrapolationError", "HalfSpaceField", "MonotonicityError",
    "ProfileConvergenceError", "ProfileSolution", "QuadratureError", "SymbolTable", "TraceField",
    "TruncationError", "Weight", "WeightDomainError", "WeightSpecError", "WextError", "a2_diagnose",
    "angle_fields", "apply_trace_operator", "compute_symbol", "energy_identity_check", "eval_symbol",
    "eval_weight", "extend", "extract_direction", "graded_levels", "growth_statistic", "neumann_trace",
    "parse_weight", "poisson_convolve", "power_weight", "profile_kernel", "read_grid", "read_trace",
    "rigidity_report", "solve_profile", "theta_residual", "verify_poisson_symbol", "weak_residual",
    "write_grid",
]
