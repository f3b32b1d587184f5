"""Goal-oriented adaptive dynamic iteration (waveform relaxation) for linear ODE systems."""

from .assembly import AssembledSystem, assemble
from .basis import DiscreteFunction, evaluate_basis, transfer_waveform
from .driver import RunConfig, RunHistory, run, stopping_check
from .estimators import (
    AdjointErrorProxy,
    EstimatorReport,
    local_dwr_estimates,
    reconstruct_adjoint_error,
    splitting_bound,
)
from .mesh import MultiMesh, bisect_cells, init_mesh, select_cells
from .model import Problem, QoI, Signal, Splitting, Term, build_splitting, evaluate_qoi
from .reference import reference_solve, stacked_solve, true_goal_error

__all__ = [
    "AssembledSystem",
    "assemble",
    "DiscreteFunction",
    "evaluate_basis",
    "transfer_waveform",
    "RunConfig",
    "RunHistory",
    "run",
    "stopping_check",
    "AdjointErrorProxy",
    "EstimatorReport",
    "local_dwr_estimates",
    "reconstruct_adjoint_error",
    "splitting_bound",
    "MultiMesh",
    "bisect_cells",
    "init_mesh",
    "select_cells",
    "Problem",
    "QoI",
    "Signal",
    "Splitting",
    "Term",
    "build_splitting",
    "evaluate_qoi",
    "reference_solve",
    "stacked_solve",
    "true_goal_error",
]
