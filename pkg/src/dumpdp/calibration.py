"""Closed-form privacy accounting for the DUMP protocols.

The forward functions map protocol parameters to the (epsilon, delta) they
certify; the ``dummies_for_*`` functions invert them to find the smallest
dummy count meeting a target budget. Inversions are solved in closed form and
then confirmed against the forward formula, so floating-point rounding can
never produce a count that misses the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

from .core import Domain, PrivacyBudget, ProtocolConfig, as_domain
from .errors import (
    AdjustedDeltaInvalid,
    BudgetOutOfRange,
    DegenerateDenominator,
    DeltaOutOfRange,
    InsufficientDummies,
    InvalidGamma,
    SqrtDomain,
)

# delta caps under which the central-DP bounds were derived
PURE_DELTA_MAX = 0.2907
MIX_DELTA_MAX = 0.5814
# the bounds are only proven for epsilon in (0, 1]
EPSILON_MAX = 1.0


class LocalBound(NamedTuple):
    epsilon: float
    valid: bool


@dataclass(frozen=True)
class CalibrationResult:
    """Outcome of a calibration.

    ``total_dummies`` is the expected size of the dummy multiset
    (``gamma * n * s``); it is an exact integer whenever ``gamma == 1``.
    """

    protocol: str
    s: int
    gamma: float
    total_dummies: float
    epsilon_achieved: float
    delta_effective: float
    epsilon_target: float
    n: int
    k: int
    epsilon_l: Optional[float] = None

    @property
    def extra_messages_per_user(self) -> float:
        return self.gamma * self.s

    @property
    def messages_per_user(self) -> float:
        return 1.0 + self.gamma * self.s

    def config(self) -> ProtocolConfig:
        return ProtocolConfig(
            n=self.n, domain=Domain(self.k), s=self.s, gamma=self.gamma, epsilon_l=self.epsilon_l
        )


def _check_delta(delta: float, cap: float) -> None:
    if not (0 < delta <= cap):
        raise DeltaOutOfRange(f"delta must be in (0, {cap}], got {delta}")


def _check_target(target: PrivacyBudget, delta_cap: float) -> None:
    if not (0 < target.epsilon <= EPSILON_MAX):
        raise BudgetOutOfRange(f"epsilon must be in (0, {EPSILON_MAX}], got {target.epsilon}")
    if not (0 < target.delta <= delta_cap):
        raise BudgetOutOfRange(f"delta must be in (0, {delta_cap}], got {target.delta}")


def _smallest(start: int, lowest: int, ok: Callable[[int], bool]) -> int:
    s = max(start, lowest)
    while not ok(s):
        s += 1
    while s > lowest and ok(s - 1):
        s -= 1
    return s


# ---------------------------------------------------------------------------
# pureDUMP


def epsilon_pure_central(total_dummies: float, domain, delta: float) -> float:
    """Central epsilon certified by ``total_dummies`` uniform dummy points.

    The bound is ``sqrt(14 k ln(2/delta) / (|S| - 1))``. It is a valid
    guarantee only when the returned value is at most 1; checking that is the
    caller's job.
    """
    k = as_domain(domain).k
    _check_delta(delta, PURE_DELTA_MAX)
    if total_dummies <= 1:
        raise InsufficientDummies(f"need more than one dummy point, got {total_dummies}")
    return math.sqrt(14 * k * math.log(2 / delta) / (total_dummies - 1))


def epsilon_pure_local(s: int, domain, delta: float) -> LocalBound:
    """LDP budget against a colluding shuffler from a user's own ``s`` dummies."""
    k = as_domain(domain).k
    _check_delta(delta, PURE_DELTA_MAX)
    if s <= 1:
        raise InsufficientDummies(f"need s >= 2 dummy points, got {s}")
    eps = math.sqrt(14 * k * math.log(2 / delta) / (s - 1))
    return LocalBound(eps, eps <= EPSILON_MAX)


def required_total_pure(epsilon: float, domain, delta: float) -> float:
    """Real-valued dummy total at which the pure bound equals ``epsilon``."""
    k = as_domain(domain).k
    return 14 * k * math.log(2 / delta) / epsilon**2 + 1


def dummies_for_pure(target: PrivacyBudget, n: int, domain) -> CalibrationResult:
    """Smallest per-user dummy count ``s >= 1`` meeting ``target`` with every user sending."""
    domain = as_domain(domain)
    _check_target(target, PURE_DELTA_MAX)
    if n < 1:
        raise BudgetOutOfRange(f"n must be >= 1, got {n}")

    def ok(s: int) -> bool:
        return n * s > 1 and epsilon_pure_central(n * s, domain, target.delta) <= target.epsilon

    guess = math.ceil(required_total_pure(target.epsilon, domain, target.delta) / n)
    s = _smallest(guess, 1, ok)
    return CalibrationResult(
        protocol="pure",
        s=s,
        gamma=1.0,
        total_dummies=float(n * s),
        epsilon_achieved=epsilon_pure_central(n * s, domain, target.delta),
        delta_effective=target.delta,
        epsilon_target=target.epsilon,
        n=n,
        k=domain.k,
    )


# ---------------------------------------------------------------------------
# mixDUMP


def lambda_from_epsilon_l(epsilon_l: float, domain) -> float:
    """Probability that GRR replaces the input by a uniform draw: ``k / (e^eps + k - 1)``."""
    k = as_domain(domain).k
    if epsilon_l < 0:
        raise BudgetOutOfRange(f"epsilon_l must be >= 0, got {epsilon_l}")
    t = math.exp(-epsilon_l)  # 0.0 for inf, no overflow for large budgets
    return k * t / (1 + (k - 1) * t)


def epsilon_l_from_lambda(lam: float, domain) -> float:
    k = as_domain(domain).k
    if not (0 < lam <= 1):
        raise BudgetOutOfRange(f"lambda must be in (0, 1], got {lam}")
    return math.log1p(k * (1 - lam) / lam)


def _mix_denominator(total_dummies: float, n: int, lam: float, delta: float) -> float:
    blanket = (n - 1) * lam
    return total_dummies + blanket - math.sqrt(2 * blanket * math.log(2 / delta)) - 1


def epsilon_mix_central(total_dummies: float, n: int, domain, lam: float, delta: float) -> float:
    """Central epsilon of mixDUMP from dummies plus the GRR-randomized users."""
    k = as_domain(domain).k
    _check_delta(delta, MIX_DELTA_MAX)
    if not (0 <= lam <= 1):
        raise BudgetOutOfRange(f"lambda must be in [0, 1], got {lam}")
    denom = _mix_denominator(total_dummies, n, lam, delta)
    if denom <= 0:
        raise DegenerateDenominator(
            f"too few users or dummies: denominator {denom:.6g} <= 0 "
            f"(|S|={total_dummies}, n={n}, lambda={lam})"
        )
    return math.sqrt(14 * k * math.log(4 / delta) / denom)


def required_total_mix(epsilon: float, n: int, domain, lam: float, delta: float) -> float:
    k = as_domain(domain).k
    blanket = (n - 1) * lam
    return 14 * k * math.log(4 / delta) / epsilon**2 - blanket + math.sqrt(2 * blanket * math.log(2 / delta)) + 1


def _mix_ok(total: float, n: int, domain: Domain, lam: float, target: PrivacyBudget) -> bool:
    if _mix_denominator(total, n, lam, target.delta) <= 0:
        return False
    return epsilon_mix_central(total, n, domain, lam, target.delta) <= target.epsilon


def dummies_for_mix(target: PrivacyBudget, n: int, domain, epsilon_l: float) -> CalibrationResult:
    """Smallest ``s >= 0`` for mixDUMP; ``s == 0`` means GRR alone suffices."""
    domain = as_domain(domain)
    _check_target(target, MIX_DELTA_MAX)
    lam = lambda_from_epsilon_l(epsilon_l, domain)
    guess = max(0, math.ceil(required_total_mix(target.epsilon, n, domain, lam, target.delta) / n))
    s = _smallest(guess, 0, lambda s: _mix_ok(n * s, n, domain, lam, target))
    return CalibrationResult(
        protocol="mix",
        s=s,
        gamma=1.0,
        total_dummies=float(n * s),
        epsilon_achieved=epsilon_mix_central(n * s, n, domain, lam, target.delta),
        delta_effective=target.delta,
        epsilon_target=target.epsilon,
        n=n,
        k=domain.k,
        epsilon_l=epsilon_l,
    )


def grr_baseline(target: PrivacyBudget, n: int, domain) -> CalibrationResult:
    """GRR-only baseline: mixDUMP with ``s = 0`` and the largest ``epsilon_l`` that works.

    Solves ``(n-1)lam - sqrt(2(n-1)lam ln(2/delta)) - 1 >= 14k ln(4/delta)/eps^2``
    for the smallest ``lam`` (a quadratic in ``sqrt((n-1)lam)``).

    Raises:
        BudgetOutOfRange: when even ``lam = 1`` (no signal left) cannot reach
            the target, i.e. shuffling alone gives no amplification.
    """
    domain = as_domain(domain)
    _check_target(target, MIX_DELTA_MAX)
    if n < 2:
        raise BudgetOutOfRange("the GRR baseline needs at least two users")
    need = 14 * domain.k * math.log(4 / target.delta) / target.epsilon**2
    b = math.sqrt(2 * math.log(2 / target.delta))
    u = (b + math.sqrt(b * b + 4 * (1 + need))) / 2
    lam = u * u / (n - 1)
    if lam >= 1:
        raise BudgetOutOfRange(
            f"no amplification: GRR alone cannot reach epsilon={target.epsilon} with n={n}, k={domain.k}"
        )
    epsilon_l = epsilon_l_from_lambda(lam, domain)
    # shave epsilon_l until the forward formula agrees despite rounding
    for _ in range(64):
        if _mix_ok(0, n, domain, lambda_from_epsilon_l(epsilon_l, domain), target):
            break
        epsilon_l = math.nextafter(epsilon_l, 0) * (1 - 1e-12)
    lam = lambda_from_epsilon_l(epsilon_l, domain)
    return CalibrationResult(
        protocol="grr",
        s=0,
        gamma=1.0,
        total_dummies=0.0,
        epsilon_achieved=epsilon_mix_central(0, n, domain, lam, target.delta),
        delta_effective=target.delta,
        epsilon_target=target.epsilon,
        n=n,
        k=domain.k,
        epsilon_l=epsilon_l,
    )


# ---------------------------------------------------------------------------
# LDP against a colluding shuffler


def epsilon_local_amplified(epsilon_l: float, s: int, domain, delta_r: float) -> LocalBound:
    """LDP budget of a GRR report hidden among the user's own ``s`` dummies.

    ``valid`` requires the domain-to-dummy ratio condition under which the
    bound was derived *and* that the bound actually improves on
    ``epsilon_l``. The printed ratio condition alone admits cases such as
    ``(epsilon_l=5, s=1000, k=50, delta_r=1e-4)`` whose bound is above 7, so
    the improvement is checked directly.

    Raises:
        SqrtDomain: ``2 k ln(1/delta_r) / s >= 1`` and the bound is undefined.
    """
    k = as_domain(domain).k
    if s < 1:
        raise InsufficientDummies(f"need s >= 1, got {s}")
    if not (0 < delta_r < 1):
        raise DeltaOutOfRange(f"delta_r must be in (0, 1), got {delta_r}")
    log_inv = math.log(1 / delta_r)
    spread = 2 * k * log_inv / s
    if spread >= 1:
        raise SqrtDomain(f"2k ln(1/delta_r)/s = {spread:.6g} >= 1; add dummies or shrink k")
    # e^eps/(e^eps+1) written to stay finite for large epsilon_l
    share = 1 / (1 + math.exp(-epsilon_l))
    eps_r = math.log(k / (1 - math.sqrt(spread)) * (1 + share / s))

    root = math.sqrt(2 * log_inv)
    # c = root e^eps (e^eps+1) / (s(e^eps+1) + e^eps); 1/c tends to 0 for huge epsilon_l
    inv_c = (s + share) / (root * math.exp(epsilon_l)) if epsilon_l < 700 else 0.0
    # (sqrt(c^2 + 4c/root) - c)^2 rewritten without cancellation
    cap = ((4 / root) / (math.sqrt(1 + 4 * inv_c / root) + 1)) ** 2
    valid = k / s <= min(1 / (2 * log_inv), cap) and eps_r <= epsilon_l
    return LocalBound(eps_r, valid)


# ---------------------------------------------------------------------------
# flexible protocols


def flexible_adjust(base: PrivacyBudget, gamma: float, n: int) -> PrivacyBudget:
    """Budget of a protocol whose users each send dummies with probability ``gamma``.

    Accounts for the event that nobody sends dummies, which has probability
    at most ``exp(-gamma n)``.
    """
    if not (0 < gamma <= 1):
        raise InvalidGamma(f"gamma must be in (0, 1], got {gamma}")
    if n < 1:
        raise BudgetOutOfRange(f"n must be >= 1, got {n}")
    miss = math.exp(-gamma * n)
    delta = base.delta + miss
    if delta >= 1:
        raise AdjustedDeltaInvalid(f"adjusted delta {delta} >= 1 (gamma*n={gamma * n})")
    return PrivacyBudget(base.epsilon - math.log1p(-miss), delta)


def _base_target(target: PrivacyBudget, gamma: float, n: int) -> PrivacyBudget:
    miss = math.exp(-gamma * n)
    eps = target.epsilon + math.log1p(-miss)
    delta = target.delta - miss
    if eps <= 0 or delta <= 0:
        raise BudgetOutOfRange(
            f"target {target} unreachable: nobody sends dummies with probability up to {miss:.3g}"
        )
    return PrivacyBudget(eps, delta)


def _flexible_result(
    target: PrivacyBudget, n: int, domain: Domain, gamma: float, s: int, total: float, epsilon_l, protocol: str
) -> CalibrationResult:
    base = _base_target(target, gamma, n)
    if epsilon_l is None:
        eps = epsilon_pure_central(total, domain, base.delta)
    else:
        eps = epsilon_mix_central(total, n, domain, lambda_from_epsilon_l(epsilon_l, domain), base.delta)
    achieved = flexible_adjust(PrivacyBudget(eps, base.delta), gamma, n)
    return CalibrationResult(
        protocol=protocol,
        s=s,
        gamma=gamma,
        total_dummies=total,
        epsilon_achieved=achieved.epsilon,
        delta_effective=achieved.delta,
        epsilon_target=target.epsilon,
        n=n,
        k=domain.k,
        epsilon_l=epsilon_l,
    )


def dummies_for_flexible(
    target: PrivacyBudget, n: int, domain, gamma: float, epsilon_l: Optional[float] = None
) -> CalibrationResult:
    """Smallest per-sender dummy count when users send dummies with probability ``gamma``.

    The base bound is evaluated at the expected dummy total ``gamma * n * s``
    against the target with the no-dummy correction removed; the returned
    ``epsilon_achieved``/``delta_effective`` include that correction.
    """
    domain = as_domain(domain)
    if not (0 < gamma <= 1):
        raise InvalidGamma(f"gamma must be in (0, 1], got {gamma}")
    if gamma == 1:
        if epsilon_l is None:
            return dummies_for_pure(target, n, domain)
        return dummies_for_mix(target, n, domain, epsilon_l)

    cap = PURE_DELTA_MAX if epsilon_l is None else MIX_DELTA_MAX
    _check_target(target, cap)
    base = _base_target(target, gamma, n)
    senders = gamma * n
    if epsilon_l is None:
        guess = math.ceil(required_total_pure(base.epsilon, domain, base.delta) / senders)
        s = _smallest(
            guess,
            1,
            lambda s: senders * s > 1
            and epsilon_pure_central(senders * s, domain, base.delta) <= base.epsilon,
        )
        protocol = "flexible-pure"
    else:
        lam = lambda_from_epsilon_l(epsilon_l, domain)
        guess = max(0, math.ceil(required_total_mix(base.epsilon, n, domain, lam, base.delta) / senders))
        s = _smallest(guess, 0, lambda s: _mix_ok(senders * s, n, domain, lam, base))
        protocol = "flexible-mix"
    return _flexible_result(target, n, domain, gamma, s, senders * s, epsilon_l, protocol)


def dummies_for_budget(target: PrivacyBudget, n: int, domain, epsilon_l: Optional[float] = None) -> CalibrationResult:
    """Spend the smallest expected dummy total that meets ``target``.

    Finds the minimal integer total ``|S|`` for the base bound, then realizes
    it as ``s = ceil(|S| / n)`` dummies sent by each user with probability
    ``gamma = |S| / (n s)``. When fewer than ``n`` dummies are needed this
    yields less than one extra message per user, which integer ``s`` with
    every user sending cannot express.
    """
    domain = as_domain(domain)
    cap = PURE_DELTA_MAX if epsilon_l is None else MIX_DELTA_MAX
    _check_target(target, cap)

    if epsilon_l is None:
        def total_ok(total: int, budget: PrivacyBudget) -> bool:
            return total > 1 and epsilon_pure_central(total, domain, budget.delta) <= budget.epsilon

        def required(budget: PrivacyBudget) -> float:
            return required_total_pure(budget.epsilon, domain, budget.delta)

        lowest = 2
    else:
        lam = lambda_from_epsilon_l(epsilon_l, domain)

        def total_ok(total: int, budget: PrivacyBudget) -> bool:
            return _mix_ok(total, n, domain, lam, budget)

        def required(budget: PrivacyBudget) -> float:
            return required_total_mix(budget.epsilon, n, domain, lam, budget.delta)

        lowest = 0

    total = _smallest(max(lowest, math.ceil(required(target))), lowest, lambda t: total_ok(t, target))
    if total == 0:
        return dummies_for_mix(target, n, domain, epsilon_l)
    s = math.ceil(total / n)
    gamma = total / (n * s)
    if gamma >= 1:
        return dummies_for_pure(target, n, domain) if epsilon_l is None else dummies_for_mix(target, n, domain, epsilon_l)
    # the no-dummy correction tightens the base target; re-solve against it
    base = _base_target(target, gamma, n)
    total = _smallest(total, lowest, lambda t: total_ok(t, base))
    s = math.ceil(total / n)
    gamma = total / (n * s)
    if gamma >= 1:
        return dummies_for_pure(target, n, domain) if epsilon_l is None else dummies_for_mix(target, n, domain, epsilon_l)
    protocol = "flexible-pure" if epsilon_l is None else "flexible-mix"
    return _flexible_result(target, n, domain, gamma, s, float(total), epsilon_l, protocol)


# ---------------------------------------------------------------------------


def privacy_of(config: ProtocolConfig, delta: float) -> Optional[PrivacyBudget]:
    """Central budget certified for ``config`` at ``delta``, or ``None`` if no bound applies.

    The epsilon is returned even when it exceeds 1, where the bounds are
    no longer proven; callers decide how to flag that.
    """
    total = config.gamma * config.n * config.s
    try:
        if config.epsilon_l is None:
            eps = epsilon_pure_central(total, config.domain, delta)
        else:
            lam = lambda_from_epsilon_l(config.epsilon_l, config.domain)
            eps = epsilon_mix_central(total, config.n, config.domain, lam, delta)
        budget = PrivacyBudget(eps, delta)
        if config.is_flexible:
            budget = flexible_adjust(budget, config.gamma, config.n)
    except (InsufficientDummies, DegenerateDenominator, DeltaOutOfRange, AdjustedDeltaInvalid):
        return None
    return budget
