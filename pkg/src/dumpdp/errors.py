"""Exception hierarchy.

Every error raised on purpose by this package derives from :class:`DumpError`,
which is itself a :class:`ValueError` so callers that only care about "bad
input" can catch the builtin.
"""

from __future__ import annotations


class DumpError(ValueError):
    """Base class for all package errors."""


# configuration
class DomainTooSmall(DumpError):
    pass


class InvalidGamma(DumpError):
    pass


class InvalidBudget(DumpError):
    pass


class InvalidConfig(DumpError):
    pass


# calibration
class DeltaOutOfRange(DumpError):
    pass


class InsufficientDummies(DumpError):
    pass


class DegenerateDenominator(DumpError):
    pass


class BudgetOutOfRange(DumpError):
    pass


class SqrtDomain(DumpError):
    pass


class AdjustedDeltaInvalid(DumpError):
    pass


# protocols
class ValueOutOfDomain(DumpError):
    pass


class SizeMismatch(DumpError):
    pass


class DegenerateRandomizer(DumpError):
    pass


# data
class EmptyHistogram(DumpError):
    pass


class MissingColumn(DumpError):
    pass


class EmptyFile(DumpError):
    pass


class MalformedRow(DumpError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


# harness / oracle
class DimensionMismatch(DumpError):
    pass


class IncompatibleSpecs(DumpError):
    pass


class InstanceTooLarge(DumpError):
    pass
