"""Exception hierarchy shared by every module."""


class ThermoError(Exception):
    """Base class for all package errors."""


class DomainError(ThermoError, ValueError):
    """A position lies outside the region where a field or model is defined."""


class ParameterError(ThermoError, ValueError):
    """A parameter violates a documented precondition."""


class ModelValidityError(ThermoError):
    """The effective model is not physically valid for these parameters."""


class NumericalError(ThermoError, ArithmeticError):
    """Quadrature or integration failed to produce a trustworthy result."""


class CorruptedStateError(NumericalError):
    """NaN or overflow appeared in a dynamical state."""

    def __init__(self, message, step=None, unit=None):
        super().__init__(message)
        self.step = step
        self.unit = unit


class AnalysisError(ThermoError):
    """A statistical estimate could not be formed from the given data."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class ConfigError(ThermoError):
    """Configuration validation failed; ``problems`` lists every violation."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
