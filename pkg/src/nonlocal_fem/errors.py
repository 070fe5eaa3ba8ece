"""Exception and warning types shared across the package."""


class DomainCollapseError(ValueError):
    """The moving interval has nonpositive width at some time."""


class OutOfDomainError(ValueError):
    """A position lies outside the current moving interval."""


class ConstructionError(ValueError):
    """Invalid finite element space parameters."""


class EvaluationError(ArithmeticError):
    """A user function returned a non-finite value."""


class SolverError(RuntimeError):
    """A linear system could not be solved reliably."""


class FixedPointError(RuntimeError):
    """The inner fixed-point iteration failed to reach tolerance.

    Attributes
    ----------
    step : int or None
        Index of the time step that failed (filled in by the driver).
    residual : float
        Max-norm distance between the last two iterates.
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, residual, iterations, step=None):
        self.residual = residual
        self.iterations = iterations
        self.step = step
        where = "" if step is None else f" at step {step}"
        super().__init__(
            f"fixed-point iteration did not converge{where} after "
            f"{iterations} iterations (last change {residual:.3e})"
        )


class FitError(ValueError):
    """Not enough usable points to fit a convergence slope."""


class ConfigError(ValueError):
    """Invalid run configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class StabilityWarning(UserWarning):
    """Time step exceeds the sufficient stability bound of the scheme."""


class DiffusionBoundWarning(UserWarning):
    """A diffusion coefficient left its declared bounds."""


class MeshWarning(UserWarning):
    """Non-fatal issue with data used in a fit or a mesh."""
