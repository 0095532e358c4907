"""Exception types shared across the package.

Every failure mode that callers are expected to branch on gets its own
class; plain ``ValueError`` is reserved for programming errors (bad
argument shapes, out-of-range indices).
"""

from __future__ import annotations


class PomdpLabError(Exception):
    """Base class for all package-specific errors."""


class StructuralModelError(PomdpLabError):
    """A model object violates a structural invariant (e.g. a column of a
    transition or observation matrix does not sum to one)."""


class ImpossibleObservationError(PomdpLabError):
    """A belief update hit an observation with zero predicted probability."""

    def __init__(self, belief, action, observation):
        self.belief = belief
        self.action = action
        self.observation = observation
        super().__init__(
            f"observation {observation} has zero probability after action "
            f"{action} from belief {belief}"
        )


class InsufficientDataError(PomdpLabError):
    """No triples were available for the requested action."""

    def __init__(self, action, message=None):
        self.action = action
        super().__init__(message or f"no view triples recorded for action {action}")


class RankDeficientError(PomdpLabError):
    """A cross-moment matrix has too small a k-th singular value."""

    def __init__(self, sigma, required_rank, message=None):
        self.sigma = sigma
        self.required_rank = required_rank
        super().__init__(
            message
            or f"singular value {sigma:.3e} below floor for rank {required_rank}"
        )


class IllConditionedError(PomdpLabError):
    """A pseudoinverse or eigenvalue floor check failed."""

    def __init__(self, value, message=None):
        self.value = value
        super().__init__(message or f"quantity {value:.3e} below conditioning floor")


class DecompositionFailedError(PomdpLabError):
    """Tensor power method could not extract a component above the floor."""


class AmbiguousAlignmentError(PomdpLabError):
    """Two reference observation columns are too close to match against."""

    def __init__(self, column_a, column_b, distance):
        self.column_a = column_a
        self.column_b = column_b
        self.distance = distance
        super().__init__(
            f"reference columns {column_a} and {column_b} are within L1 "
            f"distance {distance:.3e}; latent labels cannot be aligned"
        )


class GenerationFailedError(PomdpLabError):
    """Random model generation exhausted its retry budget."""

    def __init__(self, attempts, failure_counts, message=None):
        self.attempts = attempts
        self.failure_counts = dict(failure_counts)
        super().__init__(
            message
            or f"no valid model after {attempts} attempts; "
            f"failed conditions: {dict(failure_counts)}"
        )


class PlannerSizeError(PomdpLabError):
    """The requested planning problem exceeds a size guardrail."""


class InvalidConfigError(PomdpLabError):
    """A configuration object failed validation."""
