"""Optimal control of the fractionally damped Westervelt equation in 1D."""

from .errors import (
    AssemblyError,
    CompatibilityError,
    ConfigError,
    DomainError,
    FixedPointDivergence,
    FracwaveError,
    LineSearchStall,
    NonDegeneracyViolation,
    NumericalBlowup,
    PreconditionError,
)
from .fractional import TimeGrid, adjoint_caputo, caputo_derivative, rl_integral
from .fem import SpaceMesh, assemble, interval_mesh, neumann_extension
from .forward import (
    BoundarySignal,
    FixedPointOptions,
    LinearizedCoefficients,
    PhysicsParams,
    StateTrajectory,
    solve_linearized,
    solve_westervelt,
)
from .adjoint import AdjointData, discrete_adjoint, solve_adjoint
from .control import (
    AdmissibleSpec,
    ConditioningParams,
    ControlProblem,
    ObjectiveSpec,
    OptOptions,
    OptState,
    condition_boundary_data,
    evaluate_objective,
    optimize,
    project_admissible,
    reduced_gradient,
)

__version__ = "0.1.0"
