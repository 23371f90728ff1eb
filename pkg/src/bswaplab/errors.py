"""Exception hierarchy shared by all modules."""


class BswapLabError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(BswapLabError, ValueError):
    """Invalid device file, scenario name or CLI parameter."""


class SingularityError(BswapLabError, ArithmeticError):
    """A closed-form coefficient was evaluated too close to one of its poles."""


class DegeneracyError(BswapLabError, ArithmeticError):
    """Perturbation theory was asked to couple (nearly) degenerate levels."""


class CalibrationError(BswapLabError, RuntimeError):
    """A root search or amplitude calibration could not reach its target."""


class NoOscillationError(BswapLabError, RuntimeError):
    """A trace carries no significant oscillation to extract a frequency from."""


class EstimationError(BswapLabError, RuntimeError):
    """Tomographic estimation failed (rank deficiency or non-convergence)."""
