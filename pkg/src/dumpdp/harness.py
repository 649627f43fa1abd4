"""Repeated protocol runs, empirical MSE, and protocol comparisons."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from .calibration import (
    CalibrationResult,
    dummies_for_budget,
    dummies_for_flexible,
    grr_baseline,
    privacy_of,
)
from .core import FrequencyEstimate, PrivacyBudget, ProtocolConfig
from .data import Dataset, FrequencyVector, true_frequencies
from .errors import DimensionMismatch, DumpError, IncompatibleSpecs, InvalidConfig, SizeMismatch
from .protocols import RandomSource, analyze, run_protocol
from .theory import expected_mse, mse_exact

DEFAULT_EPSILON_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))
DEFAULT_EPSILON_L = 8.0
COMPARE_PROTOCOLS = ("pure", "mix", "grr")


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: a configuration, a dataset and how often to run it."""

    config: ProtocolConfig
    dataset: Dataset
    repeats: int = 50
    seed: int = 0
    delta: float = 1e-6
    threads: int = 1
    label: Optional[str] = None

    def __post_init__(self):
        if int(self.repeats) != self.repeats or self.repeats < 1:
            raise InvalidConfig(f"repeats must be >= 1, got {self.repeats}")
        if self.dataset.n != self.config.n or self.dataset.k != self.config.k:
            raise SizeMismatch(
                f"dataset (n={self.dataset.n}, k={self.dataset.k}) does not match "
                f"config (n={self.config.n}, k={self.config.k})"
            )

    @property
    def protocol(self) -> str:
        return self.config.protocol


@dataclass(frozen=True)
class ExperimentResult:
    protocol: str
    n: int
    k: int
    s: int
    gamma: float
    epsilon_l: Optional[float]
    repeats: int
    seed: int
    mse_empirical: float
    mse_theory: float
    mse_exact: float
    mean_estimate: np.ndarray = field(repr=False)
    messages_per_user_observed: float = 1.0
    epsilon_achieved: Optional[float] = None
    delta: float = 1e-6
    wall_time: float = 0.0

    def to_dict(self, include_estimate: bool = False) -> dict:
        out = {
            "protocol": self.protocol,
            "n": self.n,
            "k": self.k,
            "s": self.s,
            "gamma": self.gamma,
            "epsilon_l": self.epsilon_l,
            "repeats": self.repeats,
            "seed": self.seed,
            "mse_empirical": self.mse_empirical,
            "mse_theory": self.mse_theory,
            "mse_exact": self.mse_exact,
            "messages_per_user_observed": self.messages_per_user_observed,
            "epsilon_achieved": self.epsilon_achieved,
            "delta": self.delta,
            "wall_time": self.wall_time,
        }
        if include_estimate:
            out["mean_estimate"] = self.mean_estimate.tolist()
        return out


def empirical_mse(estimate: Union[FrequencyEstimate, Sequence[float]], truth: Union[FrequencyVector, Sequence[float]]) -> float:
    """Mean squared error averaged over the domain."""
    z = estimate.z if isinstance(estimate, FrequencyEstimate) else np.asarray(estimate, dtype=float)
    f = truth.f if isinstance(truth, FrequencyVector) else np.asarray(truth, dtype=float)
    if z.shape != f.shape:
        raise DimensionMismatch(f"estimate has shape {z.shape}, truth has {f.shape}")
    return float(np.mean((z - f) ** 2))


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Run user -> shuffler -> analyst ``spec.repeats`` times.

    Repeat ``r`` draws all of its randomness from ``RandomSource(seed).child(r)``,
    so results depend only on the ``ExperimentSpec`` and seed, never on ``threads``.
    """
    config = spec.config
    truth = true_frequencies(spec.dataset)
    root = RandomSource(spec.seed)
    start = time.perf_counter()
    errors = np.empty(spec.repeats)
    total = np.zeros(config.k)
    messages = 0
    for r in range(spec.repeats):
        batch = run_protocol(spec.dataset.values, config, root.child(r), threads=spec.threads)
        estimate = analyze(batch)
        errors[r] = empirical_mse(estimate, truth)
        total += estimate.z
        messages += len(batch)
    wall = time.perf_counter() - start
    budget = privacy_of(config, spec.delta)
    return ExperimentResult(
        protocol=config.protocol,
        n=config.n,
        k=config.k,
        s=config.s,
        gamma=config.gamma,
        epsilon_l=config.epsilon_l,
        repeats=spec.repeats,
        seed=spec.seed,
        mse_empirical=float(errors.mean()),
        mse_theory=expected_mse(config),
        mse_exact=mse_exact(config, truth.f),
        mean_estimate=total / spec.repeats,
        messages_per_user_observed=messages / (spec.repeats * config.n),
        epsilon_achieved=None if budget is None else budget.epsilon,
        delta=spec.delta,
        wall_time=wall,
    )


def calibrate_protocol(
    protocol: str,
    target: PrivacyBudget,
    n: int,
    domain,
    gamma: Union[str, float] = "auto",
    epsilon_l: Optional[float] = None,
) -> CalibrationResult:
    """Calibrate ``pure``, ``mix`` or the ``grr`` baseline for ``target``.

    Args:
        protocol: ``pure``, ``mix`` or ``grr`` (mix with no dummies and the
            local budget chosen to meet ``target``).
        gamma: ``"auto"`` spends the smallest expected number of dummies,
            which may be fewer than one per user; a float fixes the sending
            probability (``1.0`` gives the integer-``s`` protocols).
        epsilon_l: local budget for ``mix``; defaults to :data:`DEFAULT_EPSILON_L`.
    """
    if protocol == "grr":
        return grr_baseline(target, n, domain)
    if protocol not in ("pure", "mix"):
        raise InvalidConfig(f"unknown protocol {protocol!r}")
    eps_l = None if protocol == "pure" else (DEFAULT_EPSILON_L if epsilon_l is None else epsilon_l)
    if gamma == "auto":
        return dummies_for_budget(target, n, domain, eps_l)
    return dummies_for_flexible(target, n, domain, float(gamma), eps_l)


def _row(protocol: str, epsilon: float, result: Optional[ExperimentResult], feasible: bool) -> dict:
    if result is None:
        return {
            "protocol": protocol,
            "epsilon": epsilon,
            "s": None,
            "mse_empirical": math.nan,
            "mse_theory": math.nan,
            "messages_per_user": math.nan,
            "feasible": feasible,
        }
    return {
        "protocol": protocol,
        "epsilon": epsilon,
        "s": result.s,
        "mse_empirical": result.mse_empirical,
        "mse_theory": result.mse_theory,
        "messages_per_user": 1 + result.gamma * result.s,
        "feasible": feasible,
    }


def compare(specs: Sequence[ExperimentSpec]) -> List[dict]:
    """Run each spec and tabulate it at the central epsilon its config certifies.

    Raises:
        IncompatibleSpecs: specs disagree on dataset or delta.
    """
    if not specs:
        return []
    first = specs[0]
    for spec in specs[1:]:
        if spec.dataset is not first.dataset and not np.array_equal(spec.dataset.values, first.dataset.values):
            raise IncompatibleSpecs("specs must share one dataset")
        if spec.delta != first.delta:
            raise IncompatibleSpecs(f"specs must share delta ({spec.delta} != {first.delta})")
    rows = []
    for spec in specs:
        budget = privacy_of(spec.config, spec.delta)
        result = run_experiment(spec)
        epsilon = math.nan if budget is None else budget.epsilon
        rows.append(_row(spec.label or spec.protocol, epsilon, result, budget is not None and epsilon <= 1))
    return rows


def compare_grid(
    dataset: Dataset,
    protocols: Iterable[str] = ("pure", "mix"),
    epsilons: Iterable[float] = DEFAULT_EPSILON_GRID,
    delta: float = 1e-6,
    gamma: Union[str, float] = "auto",
    epsilon_l: Optional[float] = None,
    repeats: int = 50,
    seed: int = 0,
    threads: int = 1,
) -> List[dict]:
    """One row per protocol and target epsilon.

    Each row is calibrated for its target, then run. A protocol that cannot
    meet a target yields a row with ``feasible=False`` instead of an error.
    """
    rows = []
    for protocol in protocols:
        for eps in epsilons:
            try:
                cal = calibrate_protocol(protocol, PrivacyBudget(eps, delta), dataset.n, dataset.domain, gamma, epsilon_l)
            except DumpError:
                rows.append(_row(protocol, eps, None, False))
                continue
            spec = ExperimentSpec(cal.config(), dataset, repeats, seed, delta, threads, label=protocol)
            rows.append(_row(protocol, eps, run_experiment(spec), True))
    return rows
