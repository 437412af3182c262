"""Exception hierarchy shared by every module."""

from __future__ import annotations


class MclabError(Exception):
    """Base class for all library errors."""


class EchoStatePropertyError(MclabError):
    """The reservoir matrix has spectral radius >= 1."""


class NonRescalableError(MclabError):
    """A matrix with zero spectral radius cannot be rescaled to a target radius."""


class ConditionedError(MclabError):
    """Error that carries a condition-number estimate of the offending matrix."""

    def __init__(self, message: str, condition_estimate: float):
        super().__init__(f"{message} (condition estimate {condition_estimate:.3e})")
        self.condition_estimate = float(condition_estimate)


class StandardizationError(ConditionedError):
    """The state covariance is numerically singular, so no regular realization exists."""


class SingularMatrixError(ConditionedError):
    """A linear system is singular at working precision."""


class NotDiagonalizableError(MclabError):
    """The eigenvalues are not pairwise distinct, so the eigenbasis routes do not apply."""


class ImaginaryResidualError(MclabError):
    """A quantity that must be real came out of complex arithmetic with a large imaginary part."""


class PreconditionError(MclabError):
    """An input fails a documented precondition."""


class ConfigError(MclabError):
    """An experiment configuration is invalid."""
