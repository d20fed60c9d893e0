"""Exception taxonomy.

Every error raised by this package derives from OmpqError so the CLI can map
failures onto its exit-code contract (data/format errors exit 3, infeasible
budgets exit 4).
"""

from __future__ import annotations


class OmpqError(Exception):
    """Base class for all errors raised by ompq."""


class ValidationError(OmpqError):
    """A value violates a type invariant (shape, finiteness, range)."""


class ZeroFeature(ValidationError):
    """A feature matrix is identically zero; the metric is undefined on it."""


class DimMismatch(ValidationError):
    """Matrix shapes are incompatible for the requested operation."""


class SampleMismatch(ValidationError):
    """Two feature matrices disagree on the number of samples."""


class OrderMismatch(ValidationError):
    """Two Gram matrices disagree on their order."""


class MissingLayer(ValidationError):
    """The descriptor names a layer that has no activation dump."""


class UnknownLayer(ValidationError):
    """An activation dump names a layer absent from the descriptor."""


class MixedPinInGroup(ValidationError):
    """A granularity group mixes pinned and free layers (or unequal pins)."""


class Infeasible(OmpqError):
    """The size budget cannot be met even at the minimum bit-width.

    Carries the minimal achievable model size so callers can pick a workable
    budget.
    """

    def __init__(self, message: str, min_size_mb: float):
        super().__init__(message)
        self.min_size_mb = float(min_size_mb)


class FormatError(OmpqError):
    """A file does not conform to its documented format."""


class BadMagic(FormatError):
    """An activation dump does not start with the expected magic bytes."""


class UnsupportedVersion(FormatError):
    """An activation dump declares a format version this reader cannot parse."""


class Truncated(FormatError):
    """A file's length disagrees with the length its header declares."""


class DuplicateName(FormatError):
    """A container holds two entries with the same layer name."""


class NonFiniteValue(FormatError):
    """A payload contains NaN or infinity."""
