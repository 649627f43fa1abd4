"""Acceptance gate. Run with ``pytest tests/test_acceptance.py``; a summary
line per criterion is printed at the end of the session."""

import itertools
import math
import sys
import time

import numpy as np
import pytest
from scipy import stats

from dumpdp.calibration import (
    dummies_for_budget,
    dummies_for_flexible,
    dummies_for_pure,
    epsilon_local_amplified,
)
from dumpdp.core import PrivacyBudget, ProtocolConfig, ShuffledBatch
from dumpdp.data import synth_uniform
from dumpdp.harness import ExperimentSpec, run_experiment
from dumpdp.oracle import (
    estimator_expectation_exact,
    local_amplification_empirical,
    pure_dp_tail_check,
    true_frequencies_rational,
)
from dumpdp.protocols import RandomSource, analyze, run_protocol
from dumpdp.theory import mse_exact, mse_mix, mse_pure

N_TABLE = 500_000
DELTA = 1e-6
MSE_TOL = 0.15

# (epsilon, k, gamma) -> per-user dummies, reference dummy-count tables
TABLE_PURE = {
    (0.4, 50, 0.01): 13, (0.4, 50, 0.001): 127, (0.4, 500, 0.01): 127, (0.4, 500, 0.001): 1270,
    (0.6, 50, 0.01): 6, (0.6, 50, 0.001): 57, (0.6, 500, 0.01): 57, (0.6, 500, 0.001): 565,
    (0.8, 50, 0.01): 4, (0.8, 50, 0.001): 32, (0.8, 500, 0.01): 32, (0.8, 500, 0.001): 318,
    (1.0, 50, 0.01): 3, (1.0, 50, 0.001): 21, (1.0, 500, 0.01): 21, (1.0, 500, 0.001): 204,
}
TABLE_MIX = {
    (0.4, 50, 0.01): 12, (0.4, 50, 0.001): 118, (0.4, 500, 0.01): 119, (0.4, 500, 0.001): 1190,
    (0.6, 50, 0.01): 5, (0.6, 50, 0.001): 44, (0.6, 500, 0.01): 46, (0.6, 500, 0.001): 451,
    (0.8, 50, 0.01): 2, (0.8, 50, 0.001): 18, (0.8, 500, 0.01): 20, (0.8, 500, 0.001): 192,
    (1.0, 50, 0.01): 1, (1.0, 50, 0.001): 6, (1.0, 500, 0.01): 8, (1.0, 500, 0.001): 72,
}
CELLS = [("pure", key, s) for key, s in TABLE_PURE.items()] + [("mix", key, s) for key, s in TABLE_MIX.items()]

# Ratings-shaped calibration, recorded on the first verified run
RATINGS_N, RATINGS_K = 494_352, 2000
RATINGS_PURE_EXTRA = 406244 / RATINGS_N
RATINGS_MIX_EXTRA = 229516 / RATINGS_N


def _table_s(protocol, eps, k, gamma):
    eps_l = None if protocol == "pure" else 8.0
    return dummies_for_flexible(PrivacyBudget(eps, DELTA), N_TABLE, k, gamma, eps_l).s


# 1 -------------------------------------------------------------------------


@pytest.mark.criterion(1, "calibration reproduces the flexible dummy tables")
@pytest.mark.parametrize("protocol,cell,expected", CELLS, ids=[f"{p}-eps{c[0]}-k{c[1]}-g{c[2]}" for p, c, _ in CELLS])
def test_table_cell(protocol, cell, expected):
    eps, k, gamma = cell
    assert _table_s(protocol, eps, k, gamma) == expected


@pytest.mark.criterion(1, "calibration reproduces the flexible dummy tables")
def test_tables_runtime():
    start = time.perf_counter()
    for protocol, (eps, k, gamma), _ in CELLS:
        _table_s(protocol, eps, k, gamma)
    assert time.perf_counter() - start < 1.0


# 2 -------------------------------------------------------------------------


def _enumerable_instances():
    for k in (2, 3):
        for n in (1, 2, 3):
            for values in itertools.product(range(1, k + 1), repeat=n):
                for s in (0, 1, 2):
                    for gamma in (0.5, 1.0):
                        for eps_l in (None, math.log(3), math.inf):
                            yield ProtocolConfig(n, k, s=s, gamma=gamma, epsilon_l=eps_l), values


@pytest.mark.criterion(2, "estimators are exactly unbiased on every enumerable instance")
def test_unbiased_on_all_enumerable_instances():
    start = time.perf_counter()
    checked = 0
    protocols = set()
    for config, values in _enumerable_instances():
        truth = true_frequencies_rational(values, config.k)
        assert estimator_expectation_exact(config, values) == truth, (config, values)
        approx = estimator_expectation_exact(config, values, rational=False)
        np.testing.assert_allclose(approx, [float(f) for f in truth], rtol=0, atol=1e-12)
        protocols.add(config.protocol)
        checked += 1
    assert protocols == {"pure", "mix", "flexible-pure", "flexible-mix"}
    assert checked > 900
    assert time.perf_counter() - start < 60


# 3 -------------------------------------------------------------------------


@pytest.mark.criterion(3, "empirical MSE tracks theory at n=1e5, k=50")
def test_pure_mse_matches_theory():
    config = ProtocolConfig(100_000, 50, s=3)
    # 3 * 49 / (1e5 * 50^2), five times the n = 5e5 value
    expected = 5.88e-7
    assert mse_pure(config) == pytest.approx(expected, rel=1e-12)
    assert mse_exact(config) == pytest.approx(expected, rel=1e-12)
    data = synth_uniform(config.n, config.k, RandomSource(11))
    start = time.perf_counter()
    result = run_experiment(ExperimentSpec(config, data, repeats=50, seed=3))
    assert time.perf_counter() - start < 120
    assert result.mse_empirical == pytest.approx(expected, rel=MSE_TOL)


@pytest.mark.criterion(3, "empirical MSE tracks theory at n=1e5, k=50")
def test_mix_mse_matches_theory():
    config = ProtocolConfig(100_000, 50, s=1, epsilon_l=8.0)
    assert mse_mix(config) == pytest.approx(2.061e-7, rel=1e-3)
    data = synth_uniform(config.n, config.k, RandomSource(12))
    start = time.perf_counter()
    result = run_experiment(ExperimentSpec(config, data, repeats=50, seed=4))
    assert time.perf_counter() - start < 120
    assert result.mse_empirical == pytest.approx(2.061e-7, rel=MSE_TOL)


# 4 -------------------------------------------------------------------------


@pytest.mark.criterion(4, "pureDUMP accuracy barely depends on k")
def test_domain_size_insensitivity():
    target = PrivacyBudget(1.0, DELTA)
    mses = []
    for i, k in enumerate((50, 500, 5000)):
        cal = dummies_for_budget(target, N_TABLE, k)
        data = synth_uniform(N_TABLE, k, RandomSource(20 + i))
        result = run_experiment(ExperimentSpec(cal.config(), data, repeats=50, seed=40 + i))
        assert result.mse_empirical == pytest.approx(result.mse_theory, rel=MSE_TOL), k
        mses.append(result.mse_empirical)
    assert max(mses) / min(mses) < 2


# 5 -------------------------------------------------------------------------


@pytest.mark.criterion(5, "MSE falls ~100x per 10x users")
def test_user_count_scaling():
    target = PrivacyBudget(1.0, DELTA)
    mses = {}
    for i, n in enumerate((5_000, 50_000)):
        cal = dummies_for_budget(target, n, 50)
        data = synth_uniform(n, 50, RandomSource(30 + i))
        mses[n] = run_experiment(ExperimentSpec(cal.config(), data, repeats=50, seed=50 + i)).mse_empirical
    assert mses[5_000] / mses[50_000] == pytest.approx(100, rel=0.30)


# 6 -------------------------------------------------------------------------


@pytest.mark.criterion(6, "exact binomial tails stay below delta for calibrated parameters")
def test_calibrated_tails_below_delta():
    start = time.perf_counter()
    for eps in (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0):
        for delta in (1e-4, 1e-6):
            for k in (10, 50):
                cal = dummies_for_pure(PrivacyBudget(eps, delta), 100, k)
                tail = pure_dp_tail_check(int(cal.total_dummies), k, cal.epsilon_achieved)
                assert tail <= delta, (eps, delta, k, tail)
    assert time.perf_counter() - start < 300


@pytest.mark.criterion(6, "exact binomial tails stay below delta for calibrated parameters")
def test_tail_sum_agrees_with_scipy():
    cal = dummies_for_pure(PrivacyBudget(0.5, 1e-4), 100, 10)
    m, k, eps = int(cal.total_dummies) - 1, 10, cal.epsilon_achieved
    c = m / k
    upper = stats.binom.sf(math.ceil(c * math.exp(eps / 2) - 1) - 1, m, 1 / k)
    lower = stats.binom.cdf(math.floor(c * math.exp(-eps / 2)), m, 1 / k)
    assert pure_dp_tail_check(m + 1, k, eps) == pytest.approx(upper + lower, rel=1e-6)


# 7 -------------------------------------------------------------------------


@pytest.mark.criterion(7, "local amplification bound holds by Monte Carlo")
def test_amplification_violation_rate():
    rate = local_amplification_empirical(5.0, 10_000, 50, 1e-4, trials=10**6, rng=RandomSource(70))
    assert rate is not None and rate <= 1e-4


@pytest.mark.criterion(7, "local amplification bound holds by Monte Carlo")
def test_amplification_value_and_trend():
    bound = epsilon_local_amplified(5.0, 10_000, 50, 1e-4)
    assert bound.valid
    assert bound.epsilon == pytest.approx(4.274, abs=1e-3)
    values = [epsilon_local_amplified(5.0, s, 50, 1e-4).epsilon for s in (10_000, 30_000, 100_000)]
    assert values[0] > values[1] > values[2]


# 8 -------------------------------------------------------------------------


@pytest.mark.criterion(8, "structural invariants")
@pytest.mark.parametrize("epsilon_l", [None, 8.0, 1.0])
def test_sum_to_one(epsilon_l):
    config = ProtocolConfig(20_000, 37, s=2, epsilon_l=epsilon_l)
    data = synth_uniform(config.n, config.k, RandomSource(80))
    z = analyze(run_protocol(data.values, config, RandomSource(81))).z
    assert abs(z.sum() - 1) <= 1e-12 * config.k


@pytest.mark.criterion(8, "structural invariants")
@pytest.mark.parametrize("epsilon_l,gamma", [(None, 1.0), (8.0, 1.0), (None, 0.3), (2.0, 0.3)])
def test_permutation_invariance(epsilon_l, gamma):
    config = ProtocolConfig(5_000, 20, s=3, gamma=gamma, epsilon_l=epsilon_l)
    data = synth_uniform(config.n, config.k, RandomSource(82))
    batch = run_protocol(data.values, config, RandomSource(83))
    permuted = ShuffledBatch(np.random.default_rng(84).permutation(batch.values), batch.n, config)
    assert np.array_equal(analyze(batch).z, analyze(permuted).z)


@pytest.mark.criterion(8, "structural invariants")
def test_thread_count_does_not_change_results():
    config = ProtocolConfig(200_000, 50, s=2, gamma=0.7, epsilon_l=6.0)
    data = synth_uniform(config.n, config.k, RandomSource(85))
    one = run_experiment(ExperimentSpec(config, data, repeats=3, seed=86, threads=1))
    four = run_experiment(ExperimentSpec(config, data, repeats=3, seed=86, threads=4))
    assert np.array_equal(one.mean_estimate, four.mean_estimate)
    assert one.mse_empirical == four.mse_empirical
    a = run_protocol(data.values, config, RandomSource(87), threads=1)
    b = run_protocol(data.values, config, RandomSource(87), threads=4)
    assert np.array_equal(a.values, b.values)


# 9 -------------------------------------------------------------------------


@pytest.mark.criterion(9, "Ratings-shaped communication cost")
def test_ratings_extra_messages():
    target = PrivacyBudget(1.0, DELTA)
    pure = dummies_for_budget(target, RATINGS_N, RATINGS_K)
    mix = dummies_for_budget(target, RATINGS_N, RATINGS_K, epsilon_l=8.0)
    assert 0.3 <= pure.extra_messages_per_user <= 1.2
    assert mix.extra_messages_per_user < pure.extra_messages_per_user
    assert pure.extra_messages_per_user == pytest.approx(RATINGS_PURE_EXTRA, rel=1e-12)
    assert mix.extra_messages_per_user == pytest.approx(RATINGS_MIX_EXTRA, rel=1e-12)
    assert pure.epsilon_achieved <= 1 and mix.epsilon_achieved <= 1


# 10 ------------------------------------------------------------------------


@pytest.mark.criterion(10, "one 2e6-message pureDUMP repeat under 2 s")
def test_full_repeat_performance():
    config = ProtocolConfig(N_TABLE, 50, s=3)
    data = synth_uniform(config.n, config.k, RandomSource(100))
    start = time.perf_counter()
    batch = run_protocol(data.values, config, RandomSource(101), threads=1)
    analyze(batch)
    elapsed = time.perf_counter() - start
    assert len(batch) == 2_000_000
    assert elapsed < 2.0


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
