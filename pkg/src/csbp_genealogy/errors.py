"""Exception hierarchy shared by all modules."""


class CSBPError(Exception):
    """Base class for errors raised by this package."""


class ContractError(CSBPError, ValueError):
    """A documented precondition was violated by the caller."""


class DomainError(ContractError):
    """A quantity was requested outside the region where it is finite."""


class QuadratureError(CSBPError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class IntegrationError(CSBPError):
    """The ODE integrator failed (typically step-size underflow)."""

    def __init__(self, message, t_reached=None, nsteps=None):
        super().__init__(message)
        self.t_reached = t_reached
        self.nsteps = nsteps


class SizeCapError(CSBPError):
    """An enumeration would exceed its configured size cap."""

    def __init__(self, message, bound=None, cap=None):
        super().__init__(message)
        self.bound = bound
        self.cap = cap


class NumericalError(CSBPError):
    """A computed quantity violates a structural sign or positivity property."""
