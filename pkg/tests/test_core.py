import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dumpdp.core import Domain, FrequencyEstimate, PrivacyBudget, ProtocolConfig, Report, ShuffledBatch, validate_config
from dumpdp.errors import DomainTooSmall, InvalidBudget, InvalidConfig, InvalidGamma, ValueOutOfDomain


def test_minimal_config_is_valid():
    config = ProtocolConfig(n=10, domain=2, s=0, gamma=1.0)
    validate_config(config)
    assert config.protocol == "pure"


def test_domain_of_one_rejected():
    with pytest.raises(DomainTooSmall):
        ProtocolConfig(n=10, domain=1, s=0, gamma=1.0)


def test_zero_gamma_rejected():
    with pytest.raises(InvalidGamma):
        ProtocolConfig(n=10, domain=5, s=3, gamma=0.0)


@pytest.mark.parametrize(
    "kwargs,error",
    [
        ({"n": 0, "domain": 3}, InvalidConfig),
        ({"n": 5, "domain": 3, "s": -1}, InvalidConfig),
        ({"n": 5, "domain": 3, "gamma": 1.5}, InvalidGamma),
        ({"n": 5, "domain": 3, "epsilon_l": 0.0}, InvalidBudget),
        ({"n": 5, "domain": 3, "epsilon_l": -1.0}, InvalidBudget),
    ],
)
def test_invalid_configs(kwargs, error):
    with pytest.raises(error):
        ProtocolConfig(**kwargs)


@pytest.mark.parametrize(
    "gamma,epsilon_l,protocol",
    [(1.0, None, "pure"), (1.0, 8.0, "mix"), (0.5, None, "flexible-pure"), (0.5, math.inf, "flexible-mix")],
)
def test_protocol_names(gamma, epsilon_l, protocol):
    assert ProtocolConfig(4, 3, s=1, gamma=gamma, epsilon_l=epsilon_l).protocol == protocol


@pytest.mark.parametrize("epsilon,delta", [(0, 0.1), (-1, 0.1), (1, 0), (1, 1), (float("nan"), 0.1)])
def test_budget_ranges(epsilon, delta):
    with pytest.raises(InvalidBudget):
        PrivacyBudget(epsilon, delta)


def test_budget_caps_are_not_enforced_here():
    PrivacyBudget(5.0, 0.9)


def test_domain_membership():
    d = Domain(4)
    assert 1 in d and 4 in d and 0 not in d and 5 not in d
    with pytest.raises(ValueOutOfDomain):
        d.check(5)


@given(st.integers(2, 20).flatmap(lambda k: st.tuples(st.just(k), st.lists(st.integers(1, k), min_size=1, max_size=30))))
def test_report_is_canonical_multiset(case):
    k, values = case
    report = Report(values, k)
    assert report.values == tuple(sorted(values))
    assert report.counts().sum() == len(values)
    assert Report(list(reversed(values)), k) == report


@given(st.integers(2, 10), st.integers(-5, 0) | st.integers(11, 20))
def test_report_rejects_out_of_domain(k, bad):
    if 1 <= bad <= k:
        return
    with pytest.raises(ValueOutOfDomain):
        Report([1, bad], k)


def test_empty_report_rejected():
    with pytest.raises(InvalidConfig):
        Report([], 3)


def test_batch_is_read_only_and_checked():
    config = ProtocolConfig(2, 3, s=1)
    batch = ShuffledBatch([1, 2, 3, 3], 2, config)
    with pytest.raises(ValueError):
        batch.values[0] = 2
    np.testing.assert_array_equal(batch.counts(), [1, 1, 2])
    with pytest.raises(ValueOutOfDomain):
        ShuffledBatch([1, 4], 2, config)
    with pytest.raises(InvalidConfig):
        ShuffledBatch([1, 2], 3, config)


def test_estimate_is_not_clipped():
    config = ProtocolConfig(2, 2)
    est = FrequencyEstimate([1.5, -0.5], config)
    np.testing.assert_array_equal(est.z, [1.5, -0.5])
    np.testing.assert_array_equal(est.clipped(), [1.0, 0.0])
    with pytest.raises(InvalidConfig):
        FrequencyEstimate([1.0], config)
