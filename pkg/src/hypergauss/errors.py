"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class HypergaussError(Exception):
    """Base class for all library errors."""


class DomainError(HypergaussError, ValueError):
    """A point lies outside the domain of the requested map or branch."""


class RegimeError(HypergaussError, ValueError):
    """Parameters are outside the regime required by the operation.

    Typically raised when an operation needs the expanding regime
    (beta/p > 1 resp. gamma/q > 1) but the parameters are not in it,
    or vice versa for the sub-stochastic control.
    """


class ParameterError(HypergaussError, ValueError):
    """Invalid sizes, mismatched grids, or inconsistent options."""


class ConvergenceError(HypergaussError, RuntimeError):
    """An iteration failed to converge; carries the diagnostic history."""

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []
