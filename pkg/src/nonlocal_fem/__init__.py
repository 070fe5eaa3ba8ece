"""Galerkin finite elements for nonlocal parabolic systems on moving 1-D domains."""

from .errors import (
    ConfigError,
    ConstructionError,
    DomainCollapseError,
    FitError,
    FixedPointError,
    OutOfDomainError,
    SolverError,
    StabilityWarning,
)
from .femspace import BandedMatrix, FemSpace, build_space, interpolate, solve_banded
from .geometry import BoundaryMotion, fixed_motion, paper_motion
from .harness import Experiment, convergence_study, run_experiment
from .integrators import (
    Discretization,
    FixedPointParams,
    TimeGrid,
    Trajectory,
    integrate,
    make_context,
    stability_limit,
)
from .problem import (
    PROBLEMS,
    ExactSolution,
    FixedProblem,
    MovingProblem,
    build_corrected_paper_example,
    build_paper_example,
    build_self_manufactured,
    register_problem,
    transform_problem,
)

__version__ = "0.1.0"
