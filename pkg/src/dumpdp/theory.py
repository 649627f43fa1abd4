"""Closed-form error and communication figures.

The ``mse_*`` functions follow the published formulas term for term. The mix
variants drop the data-dependent part of the GRR variance (they assume small
frequencies), and the flexible variants treat every potential dummy as
independently present. :func:`mse_exact` keeps both effects and is what to
compare against when those simplifications matter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ProtocolConfig
from .errors import DegenerateRandomizer, DimensionMismatch, InvalidConfig


@dataclass(frozen=True)
class TheoryReport:
    mse: float
    messages_per_user: float
    bits_per_message: float


def grr_probabilities(epsilon_l: float, k: int) -> tuple:
    """Return ``(p, q)``: keep probability and per-other-value probability of GRR."""
    t = math.exp(-epsilon_l)
    denom = 1 + (k - 1) * t
    return 1 / denom, t / denom


def _grr_factors(epsilon_l: float, k: int) -> tuple:
    # (e^eps + k - 2)/(e^eps - 1)^2 and ((e^eps + k - 1)/(e^eps - 1))^2, via t = e^-eps
    if not epsilon_l > 0:
        raise DegenerateRandomizer("epsilon_l must be > 0; GRR with epsilon_l = 0 carries no signal")
    t = math.exp(-epsilon_l)
    one_minus = -math.expm1(-epsilon_l)
    if one_minus**2 == 0:
        raise DegenerateRandomizer(f"epsilon_l={epsilon_l} is too small to separate p from q")
    randomizer = (t + (k - 2) * t * t) / one_minus**2
    inflation = ((1 + (k - 1) * t) / one_minus) ** 2
    return randomizer, inflation


def mse_pure(config: ProtocolConfig) -> float:
    n, k, s = config.n, config.k, config.s
    return s * (k - 1) / (n * k * k)


def mse_mix(config: ProtocolConfig) -> float:
    if config.epsilon_l is None:
        raise InvalidConfig("mse_mix needs epsilon_l")
    n, k, s = config.n, config.k, config.s
    randomizer, inflation = _grr_factors(config.epsilon_l, k)
    return randomizer / n + s * (k - 1) / (n * k * k) * inflation


def mse_flexible_pure(config: ProtocolConfig) -> float:
    n, k, s, g = config.n, config.k, config.s, config.gamma
    return s * g * (k - g) / (n * k * k)


def mse_flexible_mix(config: ProtocolConfig) -> float:
    if config.epsilon_l is None:
        raise InvalidConfig("mse_flexible_mix needs epsilon_l")
    n, k, s, g = config.n, config.k, config.s, config.gamma
    randomizer, inflation = _grr_factors(config.epsilon_l, k)
    return randomizer / n + s * g * (k - g) / (n * k * k) * inflation


def expected_mse(config: ProtocolConfig) -> float:
    """Published MSE formula for whichever protocol ``config`` describes."""
    return {
        "pure": mse_pure,
        "mix": mse_mix,
        "flexible-pure": mse_flexible_pure,
        "flexible-mix": mse_flexible_mix,
    }[config.protocol](config)


def mse_exact(config: ProtocolConfig, frequencies: Optional[Sequence[float]] = None) -> float:
    """Exact MSE of the unbiased estimator for the given true frequencies.

    Counts of each value are a sum of independent per-user contributions, so
    the variance is computed user by user: the real message (keep w.p. ``p``,
    else ``q`` per value) plus a dummy block that is present w.p. ``gamma``
    and then ``Bin(s, 1/k)``. Uniform frequencies are assumed when none are
    given.
    """
    n, k, s, g = config.n, config.k, config.s, config.gamma
    f = np.full(k, 1.0 / k) if frequencies is None else np.asarray(frequencies, dtype=float)
    if f.shape != (k,):
        raise DimensionMismatch(f"expected {k} frequencies, got shape {f.shape}")
    if config.epsilon_l is None:
        p, q = 1.0, 0.0
    else:
        if not config.epsilon_l > 0:
            raise DegenerateRandomizer("epsilon_l must be > 0")
        p, q = grr_probabilities(config.epsilon_l, k)
        if p == q:
            raise DegenerateRandomizer("p == q: GRR output is independent of the input")
    real = n * f * p * (1 - p) + n * (1 - f) * q * (1 - q)
    dummy = n * (g * s * (1 / k) * (1 - 1 / k) + g * (1 - g) * (s / k) ** 2)
    var = (real + dummy) / (n * (p - q)) ** 2
    return float(var.mean())


def messages_per_user(config: ProtocolConfig) -> float:
    return 1 + config.gamma * config.s


def bits_per_message(config: ProtocolConfig) -> float:
    return float(math.ceil(math.log2(config.k)))


def theory_report(config: ProtocolConfig) -> TheoryReport:
    return TheoryReport(expected_mse(config), messages_per_user(config), bits_per_message(config))
