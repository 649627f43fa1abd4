"""Histogram estimation in the shuffle model with dummy points."""

from .calibration import (
    CalibrationResult,
    LocalBound,
    dummies_for_budget,
    dummies_for_flexible,
    dummies_for_mix,
    dummies_for_pure,
    epsilon_local_amplified,
    epsilon_mix_central,
    epsilon_pure_central,
    epsilon_pure_local,
    flexible_adjust,
    grr_baseline,
    lambda_from_epsilon_l,
    privacy_of,
)
from .core import Domain, FrequencyEstimate, PrivacyBudget, ProtocolConfig, Report, ShuffledBatch
from .data import Dataset, FrequencyVector, load_csv, synth_from_histogram, synth_uniform, true_frequencies
from .errors import DumpError
from .harness import ExperimentResult, ExperimentSpec, compare, compare_grid, empirical_mse, run_experiment
from .protocols import (
    RandomSource,
    analyze,
    flexible_user,
    mix_user,
    pure_user,
    run_protocol,
    shuffle,
)
from .theory import expected_mse, mse_exact, theory_report

__version__ = "0.1.0"
