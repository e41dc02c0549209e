"""accelkit: windowed acceleration of fixed-point iterations.

Provides Anderson-style and residual-minimizing accelerators with gain and
rate diagnostics, an adaptive window-depth controller, linear and
Navier-Stokes benchmark problems, and a small experiment CLI.
"""

from .acceleration import (
    Coefficients,
    DepthState,
    FixedPointSolver,
    StepDiagnostics,
    adaptive_update,
    diagnostics,
    ls_coefficients,
    run_solver,
    xi_to_alpha,
)
from .config import SolverConfig
from .exceptions import (
    AccelKitError,
    BreakdownError,
    ConfigError,
    DimensionMismatchError,
    IndefiniteAfterRegularizationError,
    InsufficientDataError,
    LinearSolveFailureError,
    NotAdmissibleError,
    SingularMatrixError,
)
from .norms import GramSystem, InnerProduct, gram
from .trace import Trace, read_trace_csv, write_trace_csv

__version__ = "0.1.0"

__all__ = [
    "AccelKitError",
    "BreakdownError",
    "Coefficients",
    "ConfigError",
    "DepthState",
    "DimensionMismatchError",
    "FixedPointSolver",
    "GramSystem",
    "IndefiniteAfterRegularizationError",
    "InnerProduct",
    "InsufficientDataError",
    "LinearSolveFailureError",
    "NotAdmissibleError",
    "SingularMatrixError",
    "SolverConfig",
    "StepDiagnostics",
    "Trace",
    "adaptive_update",
    "diagnostics",
    "gram",
    "ls_coefficients",
    "read_trace_csv",
    "run_solver",
    "write_trace_csv",
    "xi_to_alpha",
    "__version__",
]
