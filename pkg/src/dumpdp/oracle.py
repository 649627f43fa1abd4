"""Brute-force reference computations used to check the library.

Nothing here reuses the library's sampling or estimation code, except the
float route of :func:`estimator_expectation_exact`, which deliberately feeds
enumerated outcomes through the library estimators.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .calibration import epsilon_local_amplified
from .core import ProtocolConfig, ShuffledBatch, as_domain
from .errors import InstanceTooLarge, InvalidConfig, SqrtDomain
from .protocols import RNGLike, analyze, as_generator

MAX_ENUMERATION_TERMS = 3**16
MAX_TAIL_DUMMIES = 10**6


# ---------------------------------------------------------------------------
# GRR pmf


def grr_exact_pmf(x: int, epsilon_l: float, domain) -> np.ndarray:
    """Output distribution of GRR on input ``x``: ``p`` at ``x``, ``q`` elsewhere."""
    domain = as_domain(domain)
    x = domain.check(x)
    if not epsilon_l >= 0:
        raise InvalidConfig(f"epsilon_l must be >= 0, got {epsilon_l}")
    k = domain.k
    if math.isinf(epsilon_l):
        p, q = 1.0, 0.0
    else:
        e = math.exp(epsilon_l)
        p, q = e / (e + k - 1), 1 / (e + k - 1)
    pmf = np.full(k, q)
    pmf[x - 1] = p
    return pmf


def _rational_pq(epsilon_l: Optional[float], k: int) -> Tuple[Fraction, Fraction]:
    if epsilon_l is None or math.isinf(epsilon_l):
        return Fraction(1), Fraction(0)
    e = Fraction(math.exp(epsilon_l))
    return e / (e + k - 1), 1 / (e + k - 1)


def grr_exact_pmf_rational(x: int, epsilon_l: Optional[float], domain) -> Tuple[Fraction, ...]:
    """Rational GRR pmf, taking ``e^epsilon_l`` as the exact value of its float."""
    domain = as_domain(domain)
    x = domain.check(x)
    p, q = _rational_pq(epsilon_l, domain.k)
    return tuple(p if v == x else q for v in range(1, domain.k + 1))


# ---------------------------------------------------------------------------
# exact estimator expectations


Counts = Tuple[int, ...]


def _user_distribution(x: int, config: ProtocolConfig) -> Dict[Counts, Fraction]:
    """Distribution of one user's contribution to the count vector.

    Enumerates every GRR output, the send/skip branch and every dummy tuple.
    """
    k, s = config.k, config.s
    pmf = grr_exact_pmf_rational(x, config.epsilon_l, config.domain)
    gamma = Fraction(config.gamma)
    branches = [(s, gamma), (0, 1 - gamma)] if gamma < 1 else [(s, Fraction(1))]
    dist: Dict[Counts, Fraction] = {}
    for out in range(1, k + 1):
        if pmf[out - 1] == 0:
            continue
        for size, p_branch in branches:
            if p_branch == 0:
                continue
            p_tuple = Fraction(1, k**size)
            for dummies in itertools.product(range(1, k + 1), repeat=size):
                counts = [0] * k
                counts[out - 1] += 1
                for d in dummies:
                    counts[d - 1] += 1
                key = tuple(counts)
                dist[key] = dist.get(key, 0) + pmf[out - 1] * p_branch * p_tuple
    return dist


def _count_distribution(values: Sequence[int], config: ProtocolConfig) -> Dict[Counts, Fraction]:
    total: Dict[Counts, Fraction] = {(0,) * config.k: Fraction(1)}
    for x in values:
        user = _user_distribution(int(x), config)
        merged: Dict[Counts, Fraction] = {}
        for a, pa in total.items():
            for b, pb in user.items():
                key = tuple(i + j for i, j in zip(a, b))
                merged[key] = merged.get(key, 0) + pa * pb
        total = merged
    return total


def _rational_estimate(counts: Counts, config: ProtocolConfig) -> Tuple[Fraction, ...]:
    n, k = config.n, config.k
    p, q = _rational_pq(config.epsilon_l, k)
    dummy = Fraction(config.gamma) * n * config.s / k
    return tuple((c - dummy - n * q) / (n * (p - q)) for c in counts)


def estimator_expectation_exact(config: ProtocolConfig, values: Sequence[int], rational: bool = True):
    """Expected estimate over every outcome of a small protocol instance.

    Args:
        config: a configuration with ``k**(n(s+1))`` at most
            :data:`MAX_ENUMERATION_TERMS`.
        values: the ``n`` true user values.
        rational: ``True`` applies the estimator formula in exact rational
            arithmetic and returns a tuple of ``Fraction``; ``False`` runs each
            outcome through the library estimator and returns a float array.

    Raises:
        InstanceTooLarge: the instance is too big to enumerate.
    """
    if len(values) != config.n:
        raise InvalidConfig(f"{len(values)} values for n={config.n}")
    if config.k ** (config.n * (config.s + 1)) > MAX_ENUMERATION_TERMS:
        raise InstanceTooLarge(f"k^(n(s+1)) = {config.k}^{config.n * (config.s + 1)} outcomes")
    dist = _count_distribution(values, config)
    if rational:
        expect = [Fraction(0)] * config.k
        for counts, prob in dist.items():
            for v, z in enumerate(_rational_estimate(counts, config)):
                expect[v] += prob * z
        return tuple(expect)
    labels = np.arange(1, config.k + 1)
    expect = np.zeros(config.k)
    for counts, prob in dist.items():
        batch = ShuffledBatch(np.repeat(labels, counts), config.n, config)
        expect += float(prob) * analyze(batch).z
    return expect


def true_frequencies_rational(values: Sequence[int], domain) -> Tuple[Fraction, ...]:
    domain = as_domain(domain)
    n = len(values)
    return tuple(Fraction(sum(1 for x in values if x == v), n) for v in range(1, domain.k + 1))


# ---------------------------------------------------------------------------
# binomial tails behind the pureDUMP bound


def _binomial_logpmf(trials: int, p: float) -> np.ndarray:
    """``log Pr[Bin(trials, p) = j]`` for ``j = 0..trials`` via a log-factorial table."""
    logfact = np.concatenate([[0.0], np.cumsum(np.log(np.arange(1, trials + 1, dtype=np.float64)))])
    j = np.arange(trials + 1)
    with np.errstate(divide="ignore"):
        return logfact[trials] - logfact[j] - logfact[trials - j] + j * math.log(p) + (trials - j) * math.log1p(-p)


@dataclass(frozen=True)
class TailCheck:
    upper: float
    lower: float

    @property
    def total(self) -> float:
        return self.upper + self.lower


def pure_dp_tail_terms(total_dummies: int, domain, epsilon: float) -> TailCheck:
    """Both tails of the ratio decomposition, from exact binomial pmfs.

    ``S1 = Bin(|S|-1, 1/k) + 1`` and ``S2 = Bin(|S|-1, 1/k)`` with centre
    ``c = (|S|-1)/k``; the tails are ``Pr[S1 >= c e^{eps/2}]`` and
    ``Pr[S2 <= c e^{-eps/2}]``.
    """
    domain = as_domain(domain)
    total_dummies = int(total_dummies)
    if total_dummies > MAX_TAIL_DUMMIES:
        raise InstanceTooLarge(f"|S| = {total_dummies} exceeds {MAX_TAIL_DUMMIES}")
    if total_dummies < 1:
        raise InvalidConfig("need at least one dummy")
    m = total_dummies - 1
    pmf = np.exp(_binomial_logpmf(m, 1 / domain.k))
    c = m / domain.k
    upper_from = math.ceil(c * math.exp(epsilon / 2) - 1) if math.isfinite(epsilon) else m + 1
    lower_to = math.floor(c * math.exp(-epsilon / 2)) if math.isfinite(epsilon) else 0
    upper = float(pmf[max(upper_from, 0):].sum()) if upper_from <= m else 0.0
    lower = float(pmf[: lower_to + 1].sum()) if lower_to >= 0 else 0.0
    return TailCheck(upper, lower)


def pure_dp_tail_check(total_dummies: int, domain, epsilon: float) -> float:
    """Exact two-tail failure probability the pureDUMP bound controls, capped at 1.

    The two tails can overlap when there are very few dummies, so their sum
    is only a bound and may exceed 1 before capping.
    """
    return min(1.0, pure_dp_tail_terms(total_dummies, domain, epsilon).total)


def ratio_failure_gap(total_dummies: int, domain, epsilon: float) -> Tuple[float, float]:
    """``Pr[S1 / S2 >= e^eps]`` under the true joint law and under independence.

    The counts of two fixed values among ``|S| - 1`` uniform dummies are
    trinomial, hence negatively correlated; the bound treats them as
    independent. Reported for information only.
    """
    domain = as_domain(domain)
    m = int(total_dummies) - 1
    if m > 5000:
        raise InstanceTooLarge("joint law enumeration is limited to |S| <= 5001")
    k = domain.k
    thresh = math.exp(epsilon)
    marg = np.exp(_binomial_logpmf(m, 1 / k))
    b2 = np.arange(m + 1)
    # independent: sum over b1 of Pr[B1=b1] Pr[B2 <= (b1+1)/e^eps]
    cdf = np.cumsum(marg)
    indep = 0.0
    joint = 0.0
    for b1 in range(m + 1):
        limit = math.floor((b1 + 1) / thresh)
        if limit >= 0:
            indep += marg[b1] * cdf[min(limit, m)]
        rest = m - b1
        if rest == 0:
            joint += marg[b1]
            continue
        cond = np.exp(_binomial_logpmf(rest, 1 / (k - 1))) if k > 2 else np.eye(rest + 1)[rest]
        joint += marg[b1] * cond[: min(limit, rest) + 1].sum()
    return float(joint), float(indep)


# ---------------------------------------------------------------------------
# local amplification Monte Carlo


def local_amplification_empirical(
    epsilon_l: float, s: int, domain, delta_r: float, trials: int = 10**6, rng: RNGLike = 0
) -> Optional[float]:
    """Fraction of sampled reports whose likelihood ratio exceeds ``e^{eps_r}``.

    ``n1 ~ Bin(s, 1/k) + 1`` and ``n2 ~ Bin(s, 1/k)`` are drawn independently
    and the ratio ``(e^eps_l n1 + n2) / (e^eps_l n2 + n1)`` is compared with
    the amplified bound. Returns ``None`` when the bound is not valid for
    these parameters (or undefined), since it then makes no claim.
    """
    domain = as_domain(domain)
    if trials < 1:
        raise InvalidConfig("trials must be >= 1")
    try:
        bound = epsilon_local_amplified(epsilon_l, s, domain, delta_r)
    except SqrtDomain:
        return None
    if not bound.valid:
        return None
    gen = as_generator(rng)
    n1 = gen.binomial(s, 1 / domain.k, size=trials) + 1
    n2 = gen.binomial(s, 1 / domain.k, size=trials)
    e = math.exp(epsilon_l)
    ratio = (e * n1 + n2) / (e * n2 + n1)
    return float(np.mean(ratio > math.exp(bound.epsilon)))


# ---------------------------------------------------------------------------
# named suites for the command line


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.passed))


SUITES = ("pmf", "unbiased", "tails", "amplification")
CHI_SQUARE_ALPHA = 1e-3


def _suite_pmf(seed: int) -> list:
    from scipy import stats

    from .core import ProtocolConfig
    from .protocols import RandomSource, randomize_population

    draws = 10**6
    checks = []
    source = RandomSource(seed)
    for i, (eps_l, k) in enumerate([(math.log(3), 3), (1.0, 10), (8.0, 50)]):
        config = ProtocolConfig(draws, k, s=0, epsilon_l=eps_l)
        out = randomize_population(np.ones(draws, dtype=np.int64), config, source.child(i))
        observed = np.bincount(out, minlength=k + 1)[1:]
        p = stats.chisquare(observed, grr_exact_pmf(1, eps_l, k) * draws).pvalue
        checks.append(Check(f"grr eps_l={eps_l:.4g} k={k}", p > CHI_SQUARE_ALPHA, f"p={p:.3g}"))
    k, s, users = 20, 4, draws // 4
    config = ProtocolConfig(users, k, s=s)
    out = randomize_population(np.ones(users, dtype=np.int64), config, source.child(10))
    dummies = np.bincount(out, minlength=k + 1)[1:]
    dummies[0] -= users  # every real value is 1
    p = stats.chisquare(dummies).pvalue
    checks.append(Check(f"dummies uniform k={k}", p > CHI_SQUARE_ALPHA, f"p={p:.3g}"))
    gamma = 0.3
    config = ProtocolConfig(draws, k, s=1, gamma=gamma)
    senders = randomize_population(np.ones(draws, dtype=np.int64), config, source.child(11)).size - draws
    p = stats.binomtest(senders, draws, gamma).pvalue
    checks.append(Check(f"dummy sending rate gamma={gamma}", p > CHI_SQUARE_ALPHA, f"p={p:.3g}"))
    return checks


def _suite_unbiased(seed: int) -> list:
    from .core import ProtocolConfig

    failures = []
    count = 0
    for k in (2, 3):
        for n in (1, 2, 3):
            for values in itertools.product(range(1, k + 1), repeat=n):
                truth = true_frequencies_rational(values, k)
                for s in (0, 1, 2):
                    for gamma in (0.5, 1.0):
                        for eps_l in (None, math.log(3), math.inf):
                            config = ProtocolConfig(n, k, s=s, gamma=gamma, epsilon_l=eps_l)
                            exact = estimator_expectation_exact(config, values)
                            approx = estimator_expectation_exact(config, values, rational=False)
                            count += 1
                            ok = exact == truth and np.max(np.abs(approx - np.array(truth, dtype=float))) <= 1e-12
                            if not ok:
                                failures.append(f"{config.protocol} n={n} k={k} s={s} gamma={gamma} eps_l={eps_l} x={values}")
    checks = [Check(f"{count} enumerable instances", not failures, "; ".join(failures[:5]))]
    return checks


def _suite_tails(seed: int) -> list:
    from .calibration import dummies_for_pure
    from .core import PrivacyBudget

    checks = []
    for k in (10, 50):
        for delta in (1e-4, 1e-6):
            for eps in (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0):
                cal = dummies_for_pure(PrivacyBudget(eps, delta), 100, k)
                tail = pure_dp_tail_check(int(cal.total_dummies), k, cal.epsilon_achieved)
                checks.append(Check(f"eps={eps} delta={delta:g} k={k} |S|={int(cal.total_dummies)}", tail <= delta, f"tail={tail:.3g}"))
    return checks


def _suite_amplification(seed: int) -> list:
    rate = local_amplification_empirical(5.0, 10**4, 50, 1e-4, 10**6, seed)
    checks = [Check("violation rate eps_l=5 s=1e4 k=50", rate is not None and rate <= 1e-4, f"rate={rate}")]
    bounds = [epsilon_local_amplified(5.0, s, 50, 1e-4).epsilon for s in (10**4, 3 * 10**4, 10**5)]
    checks.append(Check("bound decreases in s", bounds[0] > bounds[1] > bounds[2], ", ".join(f"{b:.5g}" for b in bounds)))
    return checks


def run_suite(name: str, seed: int = 0) -> list:
    """Run one named verification suite and return its checks."""
    suites = {
        "pmf": _suite_pmf,
        "unbiased": _suite_unbiased,
        "tails": _suite_tails,
        "amplification": _suite_amplification,
    }
    if name not in suites:
        raise InvalidConfig(f"unknown suite {name!r}; choose from {SUITES}")
    return suites[name](seed)
