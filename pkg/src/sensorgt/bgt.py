"""Bayesian adaptive group testing.

Each sensor carries a probability of being normal; pools are designed so the
pool-all-normal probability lands near the value that maximizes the variance
of the predicted test outcome, and test results update the per-sensor
marginals in closed form.  The update keeps the product (independent) form
of the belief, which is exact for a single test against a product prior.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np

from .errors import FeasibilityError
from .faults import FaultState, fault_state_from_support

ENUMERATION_CAP = 10_000_000

DEFAULT_DECISION_THRESHOLD = 0.2
DEFAULT_CONVERGENCE_EPSILON = 1e-3
DEFAULT_MIN_SUBGROUP = 3
_CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class NoiseModel:
    """Boolean test channel: alpha = false positive, beta = false negative."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError("alpha must lie in [0, 1)")
        if not (0.0 <= self.beta < 1.0):
            raise ValueError("beta must lie in [0, 1)")
        if not (self.alpha + self.beta < 1.0):
            raise ValueError("alpha + beta must be < 1 (informative tests)")


@dataclass(frozen=True)
class BeliefState:
    """Per-sensor marginal probabilities of being normal."""

    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 1:
            raise ValueError("p must be a 1-D vector")
        if (p < 0).any() or (p > 1).any():
            raise ValueError("probabilities must lie in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def num_sensors(self) -> int:
        return self.p.shape[0]

    @classmethod
    def uniform(cls, num_sensors: int, prob_normal: float) -> "BeliefState":
        return cls(np.full(num_sensors, float(prob_normal)))


@dataclass(frozen=True)
class TestRecord:
    """One executed pool test: the pool and its boolean outcome."""

    pool: tuple[int, ...]
    result: int

    def __post_init__(self):
        pool = tuple(int(i) for i in self.pool)
        if len(pool) == 0:
            raise ValueError("pool must be non-empty")
        if len(set(pool)) != len(pool):
            raise ValueError("pool must contain distinct sensors")
        if self.result not in (0, 1):
            raise ValueError("result must be 0 or 1")
        object.__setattr__(self, "pool", pool)
        object.__setattr__(self, "result", int(self.result))


def default_prior(num_sensors: int, d_max: int) -> float:
    """Prior probability of being normal when at most d_max of N are faulty."""
    if not (0 <= d_max <= num_sensors):
        raise ValueError("d_max must lie in [0, num_sensors]")
    return 1.0 - d_max / num_sensors


def pool_probability_normal(belief: BeliefState, pool) -> float:
    """Probability that every sensor in the pool is normal (product form)."""
    idx = np.asarray(list(pool), dtype=int)
    if idx.size == 0:
        raise ValueError("pool must be non-empty")
    return float(np.prod(belief.p[idx]))


def predictive_variance(pool_normal_prob: float, noise: NoiseModel) -> float:
    """Variance of the boolean outcome when the pool-all-normal probability
    is pool_normal_prob under the given channel."""
    if not (0.0 <= pool_normal_prob <= 1.0):
        raise ValueError("pool_normal_prob must lie in [0, 1]")
    p_zero = (1.0 - noise.alpha) * pool_normal_prob + noise.beta * (1.0 - pool_normal_prob)
    return p_zero * (1.0 - p_zero)


def target_pool_probability(noise: NoiseModel) -> float:
    """Pool-all-normal probability that maximizes the predictive variance."""
    value = (1.0 - 2.0 * noise.beta) / (2.0 * (1.0 - noise.alpha - noise.beta))
    return float(min(1.0, max(0.0, value)))


def greedy_design_pool(belief: BeliefState, noise: NoiseModel, seed: int) -> list[int]:
    """Grow a pool greedily toward the variance-maximizing probability.

    The starting sensor is drawn uniformly; each step adds the sensor whose
    inclusion lands the pool probability closest to the target, and stops as
    soon as no candidate strictly improves the gap.  Ties prefer the lowest
    sensor index.  Returns the pool sorted by sensor index.
    """
    n = belief.num_sensors
    if n < 1:
        raise ValueError("belief must cover at least one sensor")
    rng = np.random.default_rng(seed)
    start = int(rng.integers(n))
    target = target_pool_probability(noise)

    in_pool = np.zeros(n, dtype=bool)
    in_pool[start] = True
    omega = float(belief.p[start])
    gap = abs(omega - target)
    p = belief.p
    for _ in range(n - 1):
        candidate_gaps = np.abs(omega * p - target)
        candidate_gaps[in_pool] = np.inf
        j = int(np.argmin(candidate_gaps))  # argmin takes the lowest index on ties
        if not (candidate_gaps[j] < gap):
            break
        in_pool[j] = True
        omega *= float(p[j])
        gap = abs(omega - target)
    return [int(i) for i in np.flatnonzero(in_pool)]


def bayes_update(belief: BeliefState, record: TestRecord, noise: NoiseModel) -> BeliefState:
    """Posterior marginals after one pool test.

    Out-of-pool sensors are untouched.  For in-pool sensors the posterior
    that sensor i is faulty scales its prior by the likelihood of the
    outcome given a hit pool, divided by the total outcome probability;
    the complement gives the updated probability of being normal.
    """
    pool = np.asarray(record.pool, dtype=int)
    if pool.min() < 0 or pool.max() >= belief.num_sensors:
        raise ValueError("pool index out of range")
    omega = float(np.prod(belief.p[pool]))
    if record.result == 0 and noise.beta == 0.0:
        # exact shortcut: a noiseless negative clears the pool outright;
        # also dodges 0/0 when the pool product underflows for huge pools
        assert belief.p[pool].min() > 0.0, "zero-probability outcome; test contradicts a certainty"
        p_new = belief.p.copy()
        p_new[pool] = 1.0
        return BeliefState(p_new)
    if record.result == 1:
        denom = (1.0 - noise.beta) * (1.0 - omega) + noise.alpha * omega
        hit_likelihood = 1.0 - noise.beta
    else:
        denom = noise.beta * (1.0 - omega) + (1.0 - noise.alpha) * omega
        hit_likelihood = noise.beta
    assert denom > 0.0, "zero-probability outcome; noise model contradicts the belief"
    p_new = belief.p.copy()
    p_new[pool] = 1.0 - (1.0 - belief.p[pool]) * hit_likelihood / denom
    deviation = max(0.0, float(-p_new.min()), float(p_new.max() - 1.0))
    assert deviation <= _CLAMP_TOL, f"posterior left [0,1] by {deviation}"
    np.clip(p_new, 0.0, 1.0, out=p_new)
    return BeliefState(p_new)


def threshold_decode(belief: BeliefState, sigma: float = DEFAULT_DECISION_THRESHOLD) -> FaultState:
    """Flag sensors whose probability of being normal fell below sigma."""
    if not (0.0 < sigma < 1.0):
        raise ValueError("sigma must lie in (0, 1)")
    return FaultState((belief.p < sigma).astype(np.uint8))


def map_decode(
    records,
    prior: BeliefState,
    noise: NoiseModel,
    d: int,
    seed: int = 0,
    enumeration_cap: int = ENUMERATION_CAP,
) -> FaultState:
    """Exact maximum-posterior state over supports of size <= d.

    Scores every candidate fault state against the full test history; ties
    prefer smaller support, then a seeded uniform choice.
    """
    records = list(records)
    n = prior.num_sensors
    if d < 0 or d > n:
        raise ValueError("d must lie in [0, num_sensors]")
    total = sum(math.comb(n, k) for k in range(d + 1))
    if total > enumeration_cap:
        raise FeasibilityError(f"map decode would enumerate {total} states, cap is {enumeration_cap}")

    def log_or_neg_inf(x: float) -> float:
        return math.log(x) if x > 0.0 else -math.inf

    pools = [frozenset(r.pool) for r in records]
    ll = np.empty((len(records), 2))
    for k, r in enumerate(records):
        ll[k, 0] = log_or_neg_inf(noise.alpha if r.result else 1.0 - noise.alpha)
        ll[k, 1] = log_or_neg_inf(1.0 - noise.beta if r.result else noise.beta)
    log_p = [log_or_neg_inf(v) for v in prior.p]
    log_1mp = [log_or_neg_inf(1.0 - v) for v in prior.p]
    base = sum(log_p)

    from itertools import combinations

    best_score = -math.inf
    best_support = d + 1
    best: list[tuple[int, ...]] = []
    for size in range(d + 1):
        for support in combinations(range(n), size):
            sset = set(support)
            score = base
            for j in support:
                score += log_1mp[j] - log_p[j]
            for k in range(len(records)):
                hit = 1 if (pools[k] & sset) else 0
                score += ll[k, hit]
            if score > best_score or (score == best_score and size < best_support):
                best_score, best_support, best = score, size, [support]
            elif score == best_score and size == best_support:
                best.append(support)
    if len(best) == 1:
        choice = best[0]
    else:
        rng = np.random.default_rng(seed)
        choice = best[int(rng.integers(len(best)))]
    return fault_state_from_support(n, choice)


def random_initial_pools(num_sensors: int, count: int, density: float = 0.5, seed: int = 0) -> list[list[int]]:
    """Exploration pools: independent Bernoulli membership, redrawn until
    each pool has at least two members."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    if not (0.0 < density < 1.0):
        raise ValueError("density must lie in (0, 1)")
    if num_sensors < 2:
        raise ValueError("need at least two sensors")
    rng = np.random.default_rng(seed)
    pools = []
    for _ in range(count):
        members = np.flatnonzero(rng.random(num_sensors) < density)
        while members.size < 2:
            members = np.flatnonzero(rng.random(num_sensors) < density)
        pools.append([int(i) for i in members])
    return pools


def has_converged(previous: BeliefState, current: BeliefState, epsilon: float = DEFAULT_CONVERGENCE_EPSILON) -> bool:
    """True when no marginal moved by epsilon or more."""
    if previous.num_sensors != current.num_sensors:
        raise ValueError("belief states must have the same length")
    if not (epsilon > 0):
        raise ValueError("epsilon must be positive")
    return bool(np.abs(current.p - previous.p).max() < epsilon)


def balance_split_kf_bgt(
    pool,
    belief: BeliefState,
    min_subgroup: int = DEFAULT_MIN_SUBGROUP,
) -> tuple[list[int], list[int]]:
    """Deterministic even split of the pool, padded up to a minimum size.

    Pool members are ranked most-suspect first (ascending probability of
    being normal, ties toward lower index) and dealt alternately, so the
    subgroup sizes differ by at most one and likely faults spread across
    both sides; two concurrent faults in one subgroup partially mask each
    other in the estimate comparison, split ones do not.  Any subgroup below
    min_subgroup is padded with the most-likely-normal sensors outside the
    pool (ties toward lower index), most deficient subgroup first.  Padding
    sensors support state estimation only; they must not be treated as pool
    members in belief updates.
    """
    pool = [int(i) for i in pool]
    if len(pool) < 1:
        raise ValueError("pool must be non-empty")
    if len(set(pool)) != len(pool):
        raise ValueError("pool must contain distinct sensors")
    n = belief.num_sensors
    for i in pool:
        if not (0 <= i < n):
            raise ValueError(f"sensor index {i} out of range")
    if min_subgroup < 1:
        raise ValueError("min_subgroup must be >= 1")

    ranked = sorted(pool, key=lambda i: (belief.p[i], i))
    group_a = ranked[0::2]
    group_b = ranked[1::2]

    need_a = max(0, min_subgroup - len(group_a))
    need_b = max(0, min_subgroup - len(group_b))
    if need_a + need_b > 0:
        outside = [i for i in range(n) if i not in set(pool)]
        if len(outside) < need_a + need_b:
            raise ValueError(
                f"cannot pad subgroups to size {min_subgroup}: need {need_a + need_b} outside "
                f"sensors, only {len(outside)} available"
            )
        # highest probability of normal first, index breaks ties; the more
        # deficient subgroup takes its full padding before the other
        outside.sort(key=lambda i: (-belief.p[i], i))
        order = [(group_b, need_b), (group_a, need_a)] if need_b > need_a else [(group_a, need_a), (group_b, need_b)]
        pad_iter = iter(outside)
        for group, need in order:
            for _ in range(need):
                group.append(int(next(pad_iter)))
    return group_a, group_b