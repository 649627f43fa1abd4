"""Value types shared across the package.

All types are frozen; arrays held by them are marked read-only so instances
can be handed to worker threads without copying.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import DomainTooSmall, InvalidBudget, InvalidConfig, InvalidGamma, ValueOutOfDomain

PROTOCOLS = ("pure", "mix", "flexible-pure", "flexible-mix")


def _readonly(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Domain:
    """The categorical value space ``{1, ..., k}``."""

    k: int

    def __post_init__(self):
        if isinstance(self.k, bool) or int(self.k) != self.k:
            raise DomainTooSmall(f"domain size must be an integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        if self.k < 2:
            raise DomainTooSmall(f"domain size k must be >= 2, got {self.k}")

    def __contains__(self, x) -> bool:
        return isinstance(x, (int, np.integer)) and 1 <= x <= self.k

    def check(self, x) -> int:
        if x not in self:
            raise ValueOutOfDomain(f"value {x!r} is outside [1, {self.k}]")
        return int(x)


def as_domain(domain) -> Domain:
    return domain if isinstance(domain, Domain) else Domain(domain)


@dataclass(frozen=True)
class PrivacyBudget:
    """An ``(epsilon, delta)`` pair.

    Only the generic ranges are enforced here; theorem-specific caps are
    checked by the calibration functions that rely on them.
    """

    epsilon: float
    delta: float

    def __post_init__(self):
        if not (self.epsilon > 0) or math.isnan(self.epsilon):
            raise InvalidBudget(f"epsilon must be > 0, got {self.epsilon}")
        if not (0 < self.delta < 1):
            raise InvalidBudget(f"delta must be in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything a single protocol run needs.

    Attributes:
        n: number of users.
        domain: value domain; an ``int`` is promoted to :class:`Domain`.
        s: dummy points sent by each user that sends dummies.
        gamma: probability that a user sends dummies at all (1 = every user).
        epsilon_l: local GRR budget. ``None`` selects pureDUMP; ``math.inf``
            is accepted and behaves as a GRR that never randomizes.
    """

    n: int
    domain: Domain
    s: int = 0
    gamma: float = 1.0
    epsilon_l: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "domain", as_domain(self.domain))
        validate_config(self)

    @property
    def k(self) -> int:
        return self.domain.k

    @property
    def is_flexible(self) -> bool:
        return self.gamma < 1

    @property
    def uses_grr(self) -> bool:
        return self.epsilon_l is not None

    @property
    def protocol(self) -> str:
        base = "mix" if self.uses_grr else "pure"
        return f"flexible-{base}" if self.is_flexible else base


def validate_config(config: ProtocolConfig) -> None:
    """Raise if ``config`` violates any :class:`ProtocolConfig` invariant."""
    if not isinstance(config.domain, Domain):
        raise InvalidConfig("domain must be a Domain")
    if int(config.n) != config.n or config.n < 1:
        raise InvalidConfig(f"n must be a positive integer, got {config.n}")
    if int(config.s) != config.s or config.s < 0:
        raise InvalidConfig(f"s must be a non-negative integer, got {config.s}")
    if not (0 < config.gamma <= 1):
        raise InvalidGamma(f"gamma must be in (0, 1], got {config.gamma}")
    if config.epsilon_l is not None and not (config.epsilon_l > 0):
        raise InvalidBudget(f"epsilon_l must be > 0, got {config.epsilon_l}")


@dataclass(frozen=True)
class Report:
    """One user's message multiset, stored in sorted order.

    Sorting is the canonical form of a multiset: a report carries no
    information about which of its elements was the real value.
    """

    values: tuple
    domain: Domain

    def __post_init__(self):
        domain = as_domain(self.domain)
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "values", tuple(sorted(domain.check(v) for v in self.values)))
        if not self.values:
            raise InvalidConfig("a report holds at least the real message")

    def __len__(self) -> int:
        return len(self.values)

    def counts(self) -> np.ndarray:
        """Per-value counts, index ``v - 1`` for value ``v``."""
        return np.bincount(np.asarray(self.values), minlength=self.domain.k + 1)[1:]


@dataclass(frozen=True)
class ShuffledBatch:
    """What the analyst receives: every message, in an order unlinked to users."""

    values: np.ndarray
    n: int
    config: ProtocolConfig

    def __post_init__(self):
        arr = _readonly(self.values, np.int64)
        if arr.ndim != 1:
            raise InvalidConfig("batch values must be one-dimensional")
        if arr.size and (arr.min() < 1 or arr.max() > self.config.k):
            raise ValueOutOfDomain(f"batch holds values outside [1, {self.config.k}]")
        object.__setattr__(self, "values", arr)
        if self.n != self.config.n:
            raise InvalidConfig(f"batch n={self.n} does not match config n={self.config.n}")

    def __len__(self) -> int:
        return int(self.values.size)

    def counts(self) -> np.ndarray:
        return np.bincount(self.values, minlength=self.config.k + 1)[1:]


@dataclass(frozen=True)
class FrequencyEstimate:
    """Debiased frequencies. Entries may be negative or exceed 1."""

    z: np.ndarray
    config: ProtocolConfig
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        z = _readonly(self.z, np.float64)
        if z.shape != (self.config.k,):
            raise InvalidConfig(f"estimate has shape {z.shape}, expected ({self.config.k},)")
        object.__setattr__(self, "z", z)

    def clipped(self) -> np.ndarray:
        """Display helper: the estimate clipped to ``[0, 1]``."""
        return np.clip(self.z, 0.0, 1.0)


def values_array(values: Iterable[int], domain: Domain) -> np.ndarray:
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.int64)
    if arr.size and (arr.min() < 1 or arr.max() > domain.k):
        bad = arr[(arr < 1) | (arr > domain.k)][0]
        raise ValueOutOfDomain(f"value {bad} is outside [1, {domain.k}]")
    return arr
