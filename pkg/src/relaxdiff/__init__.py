"""relaxdiff: finite-volume simulation of relaxed conservative cross-diffusion.

Densities diffuse with coefficients evaluated at a spatially smoothed copy of
the state (a screened-Poisson regularization), advanced by a semi-implicit
scheme whose discrete structure conserves mass exactly, preserves
nonnegativity, and keeps the accumulated flux potential monotone in time.
"""

from .config import RunConfig, SpeciesConfig, build_initial, parse_config
from .diagnostics import (
    BoundFit,
    CheckTolerances,
    DiagnosticsReport,
    StepRecord,
    check_step,
    energy_identity_residual,
    fit_linear_bound,
    w_increment_residual,
)
from .errors import (
    ConfigError,
    DimensionMismatchError,
    LinearSolverError,
    PicardConvergenceError,
    RelaxdiffError,
    SingularMatrixError,
    Violation,
)
from .fixedpoint import (
    CrossValidationReport,
    CrossValidationRow,
    PicardConfig,
    cross_validate,
    picard_step,
    picard_step_with_info,
    solve_frozen_slab,
)
from .grid import Field, Grid, assemble_laplacian, integrate, laplacian_apply
from .model import (
    CoefficientSpec,
    ModelSpec,
    SktCoefficients,
    TabulatedCoefficients,
    eval_coefficient,
    truncation_bound,
    validate_model,
)
from .snapshots import parse_snapshot, read_snapshot, write_snapshot
from .sparse import SolverReport, SparseMatrix, cg_solve, dense_solve
from .stepper import (
    RunResult,
    RunSinks,
    SchemeConfig,
    SystemState,
    implicit_diffusion_step,
    initial_state,
    regularize,
    run,
    step,
    step_with_info,
)

__version__ = "0.1.0"

__all__ = [
    "BoundFit",
    "CheckTolerances",
    "CoefficientSpec",
    "ConfigError",
    "CrossValidationReport",
    "CrossValidationRow",
    "DiagnosticsReport",
    "DimensionMismatchError",
    "Field",
    "Grid",
    "LinearSolverError",
    "ModelSpec",
    "PicardConfig",
    "PicardConvergenceError",
    "RelaxdiffError",
    "RunConfig",
    "RunResult",
    "RunSinks",
    "SchemeConfig",
    "SingularMatrixError",
    "SktCoefficients",
    "SolverReport",
    "SparseMatrix",
    "SpeciesConfig",
    "StepRecord",
    "SystemState",
    "TabulatedCoefficients",
    "Violation",
    "assemble_laplacian",
    "build_initial",
    "cg_solve",
    "check_step",
    "cross_validate",
    "dense_solve",
    "energy_identity_residual",
    "eval_coefficient",
    "fit_linear_bound",
    "implicit_diffusion_step",
    "initial_state",
    "integrate",
    "laplacian_apply",
    "parse_config",
    "parse_snapshot",
    "picard_step",
    "picard_step_with_info",
    "read_snapshot",
    "regularize",
    "run",
    "solve_frozen_slab",
    "step",
    "step_with_info",
    "truncation_bound",
    "validate_model",
    "w_increment_residual",
    "write_snapshot",
]
