from __future__ import annotations


class UsageError(Exception):
    """
    Raised when a usage error occurs. In this case, we capture the exception
    and show to the user instead of blowing with a traceback.
    """


class ConfigurationError(UsageError):
    """
    Raised when a configuration value is invalid; ``key`` is the dotted path of the
    offending entry, when known.
    """

    def __init__(self, message: str, key: str | None = None) -> None:
        super().__init__(f"{key}: {message}" if key else message)
        self.message = message
        self.key = key


class PatternGenerationError(ConfigurationError):
    """
    Raised when the requested pattern constraints could not be satisfied.
    """

    def __init__(self, attempts: int, reason: str) -> None:
        super().__init__(
            f"could not generate a pattern set after {attempts} attempts ({reason})"
        )
        self.attempts = attempts


class SimulationFault(RuntimeError):
    """
    Raised when the integrator produces a non-finite state, which means the
    parameters blew the membrane up.
    """


class ThermometryError(ArithmeticError):
    """Raised when an analytic temperature quantity can not be evaluated."""


class FitError(ThermometryError):
    """Raised when a transfer curve can not be fitted to a logistic."""
