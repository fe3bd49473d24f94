"""Exception types raised across the package."""


class RisIpacError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(RisIpacError, ValueError):
    """An argument violates a documented precondition."""


class ConfigError(RisIpacError, ValueError):
    """A configuration document failed schema or invariant checks.

    ``issues`` holds ``(key, message)`` pairs, one per failed check.
    """

    def __init__(self, issues):
        self.issues = list(issues)
        text = "; ".join(f"{k}: {m}" for k, m in self.issues)
        super().__init__(text or "invalid configuration")


class SingularInformationError(RisIpacError):
    """The equivalent Fisher information is rank deficient.

    ``directions`` holds the unobservable unit directions (columns).
    """

    def __init__(self, message, directions=None, ue=None):
        super().__init__(message)
        self.directions = directions
        self.ue = ue


class InfeasibleConstraintsError(RisIpacError):
    """The beamforming problem admits no solution.

    ``binding`` lists ``(family, ue)`` pairs, e.g. ``("peb", 1)``.
    """

    def __init__(self, message, binding=(), solution=None):
        super().__init__(message)
        self.binding = list(binding)
        self.solution = solution


class NoFeasibleCandidateError(RisIpacError):
    """Gaussian randomization produced no feasible candidate."""

    def __init__(self, message, best=None, violation=None):
        super().__init__(message)
        self.best = best
        self.violation = violation


class SolverError(RisIpacError):
    """The SDP backend returned a non-optimal status."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution
