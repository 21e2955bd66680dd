"""Exception types shared across the package."""

from __future__ import annotations


class HpnError(Exception):
    """Base class for all engine errors."""


class SchemaError(HpnError):
    """A document does not conform to the canonical schema.

    ``path`` points at the offending field, e.g. ``places[2].initial``.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class UnknownId(HpnError):
    pass


class UnknownPlace(UnknownId):
    pass


class UnknownTransition(UnknownId):
    pass


class FusionKindMismatch(HpnError):
    """A fusion pair names elements of different kinds."""


class InvalidNet(HpnError):
    """An operation requiring a well-formed net got one with violations."""

    def __init__(self, violations):
        super().__init__("; ".join(str(v) for v in violations))
        self.violations = tuple(violations)


class UnstableDiscreteMarking(HpnError):
    """A zero-delay discrete transition is enabled; speeds are undefined."""


class NonConvergence(HpnError):
    """The speed iteration hit its pass limit without settling.

    Carries the last two iterates so the oscillation can be inspected.
    """

    def __init__(self, message: str, last_two=None):
        super().__init__(message)
        self.last_two = last_two


class LivelockDetected(HpnError):
    """The simulation exceeded its phase or firing budget."""


class OutOfRange(HpnError):
    """A query time lies outside the trace."""


class NotFound(HpnError):
    """Repository lookup miss."""


class ConflictingId(HpnError):
    """Repository insert with an id that already exists."""
