"""User-side randomizers, the shuffler, and the analyst-side estimators.

Two ways to drive the user side are provided. The per-user functions
(:func:`pure_user`, :func:`mix_user`, :func:`flexible_user`) produce
:class:`~dumpdp.core.Report` objects and mirror the protocol description one
user at a time. :func:`randomize_population` draws the same distribution for a
whole dataset with vectorized numpy calls. It splits users into fixed blocks
with their own random streams, so its output does not depend on how many
threads process the blocks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .calibration import lambda_from_epsilon_l
from .core import Domain, FrequencyEstimate, ProtocolConfig, Report, ShuffledBatch, as_domain, values_array
from .errors import DegenerateRandomizer, InvalidConfig, SizeMismatch
from .theory import grr_probabilities

BLOCK_USERS = 1 << 16
_SEED_MASK = (1 << 64) - 1

# stream keys under a repeat's source
USER_STREAM = 0
SHUFFLE_STREAM = 1


@dataclass(frozen=True)
class RandomSource:
    """A reproducible, splittable random stream.

    The same ``(seed, stream)`` always yields the same draws; different
    ``stream`` paths are independent (numpy ``SeedSequence`` spawn keys).
    """

    seed: int
    stream: tuple = ()

    def child(self, *key: int) -> "RandomSource":
        return RandomSource(self.seed, self.stream + tuple(int(k) for k in key))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed & _SEED_MASK, spawn_key=self.stream)
        return np.random.Generator(np.random.PCG64(seq))


RNGLike = Union[RandomSource, np.random.Generator, int]


def as_generator(rng: RNGLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RandomSource):
        return rng.generator()
    return RandomSource(int(rng)).generator()


# ---------------------------------------------------------------------------
# user side, one user at a time


def grr_randomize(x: int, lam: float, domain, rng: RNGLike) -> int:
    """Keep ``x`` with probability ``1 - lam``; otherwise return a uniform draw from the domain."""
    domain = as_domain(domain)
    x = domain.check(x)
    if not (0 <= lam <= 1):
        raise InvalidConfig(f"lambda must be in [0, 1], got {lam}")
    gen = as_generator(rng)
    if gen.random() < lam:
        return int(gen.integers(1, domain.k + 1))
    return x


def _with_dummies(x: int, s: int, domain: Domain, gen: np.random.Generator) -> Report:
    dummies = gen.integers(1, domain.k + 1, size=s)
    return Report((x, *dummies.tolist()), domain)


def pure_user(x: int, config: ProtocolConfig, rng: RNGLike) -> Report:
    """The real value plus ``s`` uniform dummy points."""
    x = config.domain.check(x)
    return _with_dummies(x, config.s, config.domain, as_generator(rng))


def mix_user(x: int, config: ProtocolConfig, rng: RNGLike) -> Report:
    """GRR-randomize the real value, then add ``s`` uniform dummy points."""
    if config.epsilon_l is None:
        raise InvalidConfig("mix_user needs epsilon_l")
    gen = as_generator(rng)
    lam = lambda_from_epsilon_l(config.epsilon_l, config.domain)
    x_r = grr_randomize(x, lam, config.domain, gen)
    return _with_dummies(x_r, config.s, config.domain, gen)


def flexible_user(x: int, config: ProtocolConfig, rng: RNGLike) -> Report:
    """Send dummies with probability ``gamma``; otherwise send only the (randomized) value.

    With ``gamma == 1`` no coin is drawn, so the output is draw-for-draw the
    same as the non-flexible user.
    """
    gen = as_generator(rng)
    sends = config.gamma >= 1 or gen.random() < config.gamma
    if config.epsilon_l is not None:
        x = grr_randomize(x, lambda_from_epsilon_l(config.epsilon_l, config.domain), config.domain, gen)
    else:
        x = config.domain.check(x)
    return _with_dummies(x, config.s if sends else 0, config.domain, gen)


def user_report(x: int, config: ProtocolConfig, rng: RNGLike) -> Report:
    return flexible_user(x, config, rng)


def collect_reports(values: Iterable[int], config: ProtocolConfig, source: RandomSource) -> list:
    """Run every user through :func:`user_report` with per-user streams."""
    users = source.child(USER_STREAM)
    return [user_report(int(x), config, users.child(i)) for i, x in enumerate(values)]


# ---------------------------------------------------------------------------
# user side, vectorized


def _randomize_block(x: np.ndarray, config: ProtocolConfig, lam: float, source: RandomSource) -> np.ndarray:
    gen = source.generator()
    k = config.k
    if lam > 0:
        x = x.copy()
        flip = gen.random(x.size) < lam
        x[flip] = gen.integers(1, k + 1, size=int(flip.sum()))
    senders = x.size if config.gamma >= 1 else int((gen.random(x.size) < config.gamma).sum())
    dummies = gen.integers(1, k + 1, size=senders * config.s)
    return np.concatenate([x, dummies])


def randomize_population(
    values: Sequence[int], config: ProtocolConfig, source: RandomSource, threads: int = 1
) -> np.ndarray:
    """All messages sent by the users holding ``values``, unshuffled.

    Users are grouped in blocks of :data:`BLOCK_USERS`; block ``b`` draws from
    ``source.child(USER_STREAM, b)``. Results are identical for any
    ``threads``.
    """
    x = values_array(values, config.domain)
    if x.size != config.n:
        raise SizeMismatch(f"dataset has {x.size} users, config expects {config.n}")
    lam = 0.0 if config.epsilon_l is None else lambda_from_epsilon_l(config.epsilon_l, config.domain)
    starts = range(0, x.size, BLOCK_USERS)
    jobs = [(x[a : a + BLOCK_USERS], source.child(USER_STREAM, b)) for b, a in enumerate(starts)]

    def work(job):
        return _randomize_block(job[0], config, lam, job[1])

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, jobs))
    else:
        parts = [work(job) for job in jobs]
    return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)


# ---------------------------------------------------------------------------
# shuffler


def shuffle_messages(messages: np.ndarray, config: ProtocolConfig, rng: RNGLike) -> ShuffledBatch:
    """Uniformly permute a flat message array (numpy's Fisher-Yates)."""
    return ShuffledBatch(as_generator(rng).permutation(np.asarray(messages, dtype=np.int64)), config.n, config)


def shuffle(reports: Sequence[Report], config: ProtocolConfig, rng: RNGLike) -> ShuffledBatch:
    """Pool every report's messages and emit them in uniformly random order."""
    if len(reports) != config.n:
        raise SizeMismatch(f"got {len(reports)} reports for n={config.n}")
    flat = np.fromiter((v for r in reports for v in r.values), dtype=np.int64)
    return shuffle_messages(flat, config, rng)


def run_protocol(values: Sequence[int], config: ProtocolConfig, source: RandomSource, threads: int = 1) -> ShuffledBatch:
    """Users then shuffler: what the analyst receives for one run."""
    messages = randomize_population(values, config, source, threads=threads)
    return shuffle_messages(messages, config, source.child(SHUFFLE_STREAM))


# ---------------------------------------------------------------------------
# analyst side


def _expect_protocol(batch: ShuffledBatch, flexible: bool, grr: bool) -> ProtocolConfig:
    config = batch.config
    if config.uses_grr != grr:
        raise InvalidConfig(f"batch comes from a {config.protocol} run")
    if not flexible and config.is_flexible:
        raise InvalidConfig("batch comes from a flexible run; use the flexible estimator")
    return config


def _check_size(batch: ShuffledBatch, exact: bool) -> None:
    n, s = batch.config.n, batch.config.s
    size = len(batch)
    if exact:
        if size != n * (s + 1):
            raise SizeMismatch(f"batch has {size} messages, expected n(s+1) = {n * (s + 1)}")
        return
    if not (n <= size <= n * (s + 1)) or (s == 0 and size != n) or (s and (size - n) % s):
        raise SizeMismatch(f"batch of {size} messages is not n plus a multiple of s (n={n}, s={s})")


def _debias(batch: ShuffledBatch, dummy_mass: float) -> FrequencyEstimate:
    config = batch.config
    n, k = config.n, config.k
    counts = batch.counts().astype(np.float64)
    if config.epsilon_l is None:
        z = (counts - dummy_mass / k) / n
    else:
        p, q = grr_probabilities(config.epsilon_l, k)
        if p == q:
            raise DegenerateRandomizer("p == q: GRR output is independent of the input")
        z = (counts - dummy_mass / k - n * q) / (n * (p - q))
    return FrequencyEstimate(z, config)


def pure_estimate(batch: ShuffledBatch) -> FrequencyEstimate:
    """Subtract the expected dummy count ``ns/k`` from every value's count and divide by ``n``."""
    config = _expect_protocol(batch, flexible=False, grr=False)
    _check_size(batch, exact=True)
    return _debias(batch, config.n * config.s)


def mix_estimate(batch: ShuffledBatch) -> FrequencyEstimate:
    """Remove dummies and GRR bias: ``(count - ns/k - nq) / (n (p - q))``.

    Since ``p - q = 1 - lambda`` and ``q = lambda / k`` this is the same as
    ``(count - n(lambda + s)/k) / (n (1 - lambda))``. A ``1 - 2q``
    denominator would only be unbiased for ``k = 2``.
    """
    config = _expect_protocol(batch, flexible=False, grr=True)
    _check_size(batch, exact=True)
    return _debias(batch, config.n * config.s)


def flexible_pure_estimate(batch: ShuffledBatch) -> FrequencyEstimate:
    config = _expect_protocol(batch, flexible=True, grr=False)
    _check_size(batch, exact=not config.is_flexible)
    return _debias(batch, config.gamma * config.n * config.s)


def flexible_mix_estimate(batch: ShuffledBatch) -> FrequencyEstimate:
    config = _expect_protocol(batch, flexible=True, grr=True)
    _check_size(batch, exact=not config.is_flexible)
    return _debias(batch, config.gamma * config.n * config.s)


def analyze(batch: ShuffledBatch) -> FrequencyEstimate:
    """Apply the estimator matching the batch's protocol."""
    return {
        "pure": pure_estimate,
        "mix": mix_estimate,
        "flexible-pure": flexible_pure_estimate,
        "flexible-mix": flexible_mix_estimate,
    }[batch.config.protocol](batch)
