"""LP/MILP model builders and solver backends."""
from .backend import HighsBackend, ScipyBackend, SolverBackend, SolverSettings, make_backend
from .builders import (
    CommitmentSchedule,
    build_deterministic_uc,
    build_extensive_form,
    build_master,
    build_recourse_lp,
    default_penalties,
    first_stage_cost,
    forced_commitment,
    penalties_of,
)
from .checker import commitment_violations, dc_flows, dispatch_violations, solution_violations
from .model import EQ, GE, LE, LinearModel, SolveResult, Status

__all__ = [
    "CommitmentSchedule", "EQ", "GE", "HighsBackend", "LE", "LinearModel", "ScipyBackend",
    "SolveResult", "SolverBackend", "SolverSettings", "Status", "build_deterministic_uc",
    "build_extensive_form", "build_master", "build_recourse_lp", "commitment_violations", "dc_flows",
    "default_penalties", "dispatch_violations",
    "first_stage_cost", "forced_commitment", "make_backend", "penalties_of", "solution_violations",
]
