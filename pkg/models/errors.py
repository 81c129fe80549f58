"""
Exception hierarchy for the sleep-mode analysis package.

Every exception carries the process exit code the CLI reports for it.
"""

from typing import Any, Dict, Optional


class SleepModeError(Exception):
    """Base class for all package errors"""

    exit_code = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.details = details or {}


class ConfigError(SleepModeError):
    """Missing or invalid configuration / model parameters"""

    exit_code = 1


class DomainError(ConfigError):
    """Argument outside the domain of an operation"""


class UnsupportedOrderError(DomainError):
    """Moment order outside {1, 2, 3}"""


class InstabilityError(SleepModeError):
    """Offered load rho = lambda * E[sigma] too close to (or above) one"""

    exit_code = 2


class GridTooLargeError(SleepModeError):
    """Sweep or optimization grid over the allowed number of points"""

    exit_code = 3


class InfeasibleProblemError(SleepModeError):
    """Optimization problem has no feasible grid point"""

    exit_code = 4


class SeriesConvergenceError(SleepModeError):
    """Vacation series did not terminate within the iteration cap"""

    exit_code = 1
