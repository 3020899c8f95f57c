"""Exception hierarchy shared by all modules.

Exit-code mapping used by the CLI: ConfigError -> 1, everything else
derived from NrKramersError -> 2.
"""


class NrKramersError(Exception):
    """Base class for all package errors."""


class ConfigError(NrKramersError):
    """Malformed or inconsistent user configuration."""


class EvaluationError(NrKramersError):
    """Non-finite potential/gradient evaluation; carries the offending point."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class ContractViolationError(NrKramersError):
    """An operation was called with input violating its stated precondition."""


class PreconditionViolationError(ContractViolationError):
    """Structural precondition failed (e.g. spectrum not of the assumed shape)."""


class NumericFailureError(NrKramersError):
    """A numerical routine failed to converge or an internal identity broke."""


class DegenerateCriticalPointError(NrKramersError):
    """Located critical point has a (near-)singular Hessian."""

    def __init__(self, message, x=None, det=None):
        super().__init__(message)
        self.x = x
        self.det = det


class InconsistentLevelError(NrKramersError):
    """The starting minimum is not inside any sublevel-set component."""


class GateNotFoundError(NrKramersError):
    """No gate saddle connects the start component to the rest at this level."""


class UnreachableTargetError(NrKramersError):
    """No candidate level makes the requested targets reachable through a gate."""


class ModelInconsistencyError(NrKramersError):
    """The drift field violates its structural identities at a critical point."""


class GuardViolationError(NrKramersError):
    """Trajectory left the spatial guard region."""

    def __init__(self, message, prefix_steps=None):
        super().__init__(message)
        self.prefix_steps = prefix_steps


class UnreliableEstimateError(NrKramersError):
    """Too many censored trajectories for a trustworthy estimate."""
