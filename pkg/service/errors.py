"""Exception hierarchy shared by the numerical services and the CLI."""

from typing import Optional


class QcInvariantError(Exception):
    """Base class for every error raised by this package"""


class InvalidMatrix(QcInvariantError):
    """Matrix with non-finite entries or an unsupported shape"""


class DimensionMismatch(QcInvariantError):
    """Objective, operator or field does not match the system dimension"""


class GridMismatch(QcInvariantError):
    """Field, kernel or Hessian defined on a different time grid"""


class InvalidKernel(QcInvariantError):
    """Correlation kernel that cannot be a covariance (not PSD, wrong shape)"""


class InsufficientData(QcInvariantError):
    """Too few converged runs to build the requested statistic"""


class ReferencePointError(QcInvariantError):
    """Front point lies outside the hypervolume reference box"""


class IntegratorError(QcInvariantError):
    """Adaptive integrator could not take a step (step size underflow)"""


class ConfigError(QcInvariantError):
    """Experiment configuration could not be parsed or validated"""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        location = []
        if field:
            location.append(f"field '{field}'")
        if line:
            location.append(f"line {line}")
        suffix = f" ({', '.join(location)})" if location else ""
        super().__init__(f"{message}{suffix}")
