"""Combinatorial (non-adaptive) group testing.

A 0/1 measurement matrix maps a sparse fault state to boolean test outcomes
(OR over pooled sensors); decoding searches all states up to a sparsity
budget for the best match.  Two notions of d-disjunctness are supported:

* default: every set of d+1 columns contains SOME column that gets a row to
  itself (an isolating row).  This is the weaker "distinguishing" property;
  for d=1 it is equivalent to all columns being distinct.
* strict: EVERY column gets an isolating row against every d other columns
  (no column is covered by the union of d others).  This is the classical
  property that guarantees exact recovery of all states with support <= d
  from noiseless outcomes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import FeasibilityError
from .faults import FaultState, fault_state_from_support

ENUMERATION_CAP = 10_000_000


@dataclass(frozen=True)
class MeasurementMatrix:
    """0/1 pooling matrix; rows are tests, columns are sensors.

    Every row must contain at least two ones so the pool can be split when
    tests are realized with paired Kalman filters.  Duplicate rows are legal
    but wasteful, so they trigger a warning.
    """

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 2:
            raise ValueError("bits must be a 2-D array")
        if not np.isin(bits, (0, 1)).all():
            raise ValueError("bits must contain only 0 and 1")
        if (bits.sum(axis=1) < 2).any():
            raise ValueError("every row must contain at least two ones")
        if len({row.tobytes() for row in bits}) < bits.shape[0]:
            warnings.warn("measurement matrix contains duplicate rows", stacklevel=2)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def num_tests(self) -> int:
        return self.bits.shape[0]

    @property
    def num_sensors(self) -> int:
        return self.bits.shape[1]

    def row_pool(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.bits[i])]


@dataclass(frozen=True)
class TestResults:
    """Boolean outcomes, one per test row."""

    outcomes: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.outcomes, dtype=np.uint8)
        if z.ndim != 1 or not np.isin(z, (0, 1)).all():
            raise ValueError("outcomes must be a 1-D 0/1 vector")
        z.setflags(write=False)
        object.__setattr__(self, "outcomes", z)

    def __len__(self) -> int:
        return self.outcomes.shape[0]


def generate_random_matrix(
    num_tests: int,
    num_sensors: int,
    density: float = 0.5,
    seed: int = 0,
) -> MeasurementMatrix:
    """Independent Bernoulli(density) entries; rows with fewer than two ones
    are redrawn so every pool stays splittable."""
    if num_tests < 1 or num_sensors < 2:
        raise ValueError("need num_tests >= 1 and num_sensors >= 2")
    if not (0.0 < density < 1.0):
        raise ValueError("density must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    bits = (rng.random((num_tests, num_sensors)) < density).astype(np.uint8)
    for i in range(num_tests):
        while bits[i].sum() < 2:
            bits[i] = (rng.random(num_sensors) < density).astype(np.uint8)
    return MeasurementMatrix(bits)


def _as_bits(matrix) -> np.ndarray:
    if isinstance(matrix, MeasurementMatrix):
        return matrix.bits
    bits = np.asarray(matrix, dtype=np.uint8)
    if bits.ndim != 2 or not np.isin(bits, (0, 1)).all():
        raise ValueError("matrix must be a 2-D 0/1 array")
    return bits


def _column_masks(bits: np.ndarray) -> list[int]:
    masks = []
    for j in range(bits.shape[1]):
        mask = 0
        for i in np.flatnonzero(bits[:, j]):
            mask |= 1 << int(i)
        masks.append(mask)
    return masks


def is_d_disjunct(matrix, d: int, strict: bool = False, check_cap: int = ENUMERATION_CAP) -> bool:
    """Check d-disjunctness of the matrix.

    With strict=False (default), every subset of d+1 columns must contain at
    least one column with a row to itself (a row that is 1 there and 0 on the
    other d columns).  With strict=True, every column must have such a row
    against every choice of d other columns, which is the condition under
    which noiseless decoding of all <=d-sparse states is exact.
    """
    bits = _as_bits(matrix)
    m, n = bits.shape
    if d < 1 or d >= n:
        raise ValueError("d must lie in [1, num_sensors - 1]")
    num_subsets = math.comb(n, d + 1)
    work = num_subsets * (d + 1)
    if work > check_cap:
        raise FeasibilityError(f"disjunctness check needs {work} column inspections, cap is {check_cap}")
    masks = _column_masks(bits)
    for combo in combinations(range(n), d + 1):
        any_isolated = False
        for j in combo:
            rest = 0
            for k in combo:
                if k != j:
                    rest |= masks[k]
            # column j is isolated iff it has a row outside the union of the others
            if masks[j] & ~rest:
                any_isolated = True
                if not strict:
                    break
            elif strict:
                return False
        if not any_isolated:
            return False
    return True


def boolean_apply(matrix, state: FaultState) -> TestResults:
    """Noiseless outcomes: OR of the fault flags over each row's pool."""
    bits = _as_bits(matrix)
    if state.num_sensors != bits.shape[1]:
        raise ValueError("state length does not match matrix columns")
    z = (bits @ state.flags.astype(np.int64)) > 0
    return TestResults(z.astype(np.uint8))


def _support_budget(n: int, d: int, cap: int) -> None:
    total = sum(math.comb(n, k) for k in range(d + 1))
    if total > cap:
        raise FeasibilityError(f"decoding would enumerate {total} candidate states, cap is {cap}")


def _results_mask(results: TestResults) -> int:
    mask = 0
    for i in np.flatnonzero(results.outcomes):
        mask |= 1 << int(i)
    return mask


def min_distance_decode(
    matrix,
    results: TestResults,
    d: int,
    seed: int = 0,
    enumeration_cap: int = ENUMERATION_CAP,
) -> FaultState:
    """Closest candidate state under Hamming distance of predicted outcomes.

    All states with support size <= d are scored; ties prefer smaller
    support, remaining ties are broken uniformly at random with the seed.
    """
    bits = _as_bits(matrix)
    m, n = bits.shape
    if len(results) != m:
        raise ValueError("results length does not match matrix rows")
    if d < 0 or d > n:
        raise ValueError("d must lie in [0, num_sensors]")
    _support_budget(n, d, enumeration_cap)
    masks = _column_masks(bits)
    z = _results_mask(results)

    best_dist = m + 1
    best_support = d + 1
    best: list[tuple[int, ...]] = []
    for size in range(d + 1):
        for support in combinations(range(n), size):
            pattern = 0
            for j in support:
                pattern |= masks[j]
            dist = (pattern ^ z).bit_count()
            if dist < best_dist or (dist == best_dist and size < best_support):
                best_dist, best_support, best = dist, size, [support]
            elif dist == best_dist and size == best_support:
                best.append(support)
    if len(best) == 1:
        choice = best[0]
    else:
        rng = np.random.default_rng(seed)
        choice = best[int(rng.integers(len(best)))]
    return fault_state_from_support(n, choice)


def likelihood_decode(
    matrix,
    results: TestResults,
    d: int,
    alpha: float,
    beta: float,
    prior_faulty: float,
    seed: int = 0,
    enumeration_cap: int = ENUMERATION_CAP,
) -> FaultState:
    """Maximum-posterior candidate under an asymmetric flip model.

    alpha is the false-positive and beta the false-negative probability of a
    test; prior_faulty is the i.i.d. prior that a sensor is faulty.  With
    alpha == beta this ranks states like min_distance_decode with its
    smaller-support tie-break, provided the prior penalty is mild:
    d * log((1-prior)/prior) < log((1-alpha)/alpha).  A sharper prior can
    legitimately trade one extra mismatch for a smaller support.
    """
    bits = _as_bits(matrix)
    m, n = bits.shape
    if len(results) != m:
        raise ValueError("results length does not match matrix rows")
    for name, p in (("alpha", alpha), ("beta", beta)):
        if not (0.0 <= p < 1.0):
            raise ValueError(f"{name} must lie in [0, 1)")
    if not (0.0 < prior_faulty < 1.0):
        raise ValueError("prior_faulty must lie in (0, 1)")
    _support_budget(n, d, enumeration_cap)
    masks = _column_masks(bits)
    z = _results_mask(results)

    def log_or_neg_inf(x: float) -> float:
        return math.log(x) if x > 0.0 else -math.inf

    # scoring by the four (outcome, pool-state) counts keeps analytically
    # equal scores bit-identical, so ties are broken by the seed, not fp noise
    log_hit_seen = log_or_neg_inf(1.0 - beta)
    log_hit_missed = log_or_neg_inf(beta)
    log_quiet_fired = log_or_neg_inf(alpha)
    log_quiet_quiet = log_or_neg_inf(1.0 - alpha)
    log_prior_ratio = math.log(prior_faulty) - math.log(1.0 - prior_faulty)
    full = (1 << m) - 1

    best_score = -math.inf
    best_support = d + 1
    best: list[tuple[int, ...]] = []
    for size in range(d + 1):
        for support in combinations(range(n), size):
            pattern = 0
            for j in support:
                pattern |= masks[j]
            n_hit_seen = (pattern & z).bit_count()
            n_hit_missed = (pattern & ~z & full).bit_count()
            n_quiet_fired = (z & ~pattern & full).bit_count()
            n_quiet_quiet = m - n_hit_seen - n_hit_missed - n_quiet_fired
            score = size * log_prior_ratio
            # skip zero counts so 0 * -inf never produces a nan
            for count, log_p in (
                (n_hit_seen, log_hit_seen),
                (n_hit_missed, log_hit_missed),
                (n_quiet_fired, log_quiet_fired),
                (n_quiet_quiet, log_quiet_quiet),
            ):
                if count:
                    score += count * log_p
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


def suggest_num_tests(num_sensors: int, d: int, regime: str = "random_faults", constant: float = 1.0) -> int:
    """Rule-of-thumb test counts: c*d*log2(N) for random fault placement,
    c*d^2*log2(N) for adversarial placement."""
    if num_sensors < 2 or d < 1:
        raise ValueError("need num_sensors >= 2 and d >= 1")
    if constant <= 0:
        raise ValueError("constant must be positive")
    log_n = math.log2(num_sensors)
    if regime == "random_faults":
        return math.ceil(constant * d * log_n)
    if regime == "adversarial":
        return math.ceil(constant * d * d * log_n)
    raise ValueError(f"unknown regime {regime!r}")


def find_disjunct_matrix(
    num_tests: int,
    num_sensors: int,
    d: int,
    seed: int = 0,
    density: float = 0.5,
    strict: bool = False,
    max_attempts: int = 2000,
) -> MeasurementMatrix:
    """Regenerate random matrices until one passes is_d_disjunct."""
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        candidate = generate_random_matrix(num_tests, num_sensors, density, int(rng.integers(0, 2**63)))
        if is_d_disjunct(candidate, d, strict=strict):
            return candidate
    raise FeasibilityError(
        f"no {'strict ' if strict else ''}{d}-disjunct {num_tests}x{num_sensors} matrix found "
        f"in {max_attempts} attempts"
    )


def save_matrix(matrix: MeasurementMatrix, path) -> None:
    """Text format: header "M N", then M lines of N 0/1 characters."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{matrix.num_tests} {matrix.num_sensors}\n")
        for row in matrix.bits:
            fh.write("".join(str(int(b)) for b in row) + "\n")


def load_matrix(path) -> MeasurementMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("matrix file must start with an 'M N' header line")
        m, n = int(header[0]), int(header[1])
        rows = []
        for _ in range(m):
            line = fh.readline().strip()
            if len(line) != n or set(line) - {"0", "1"}:
                raise ValueError("matrix rows must be lines of exactly N 0/1 characters")
            rows.append([int(ch) for ch in line])
    return MeasurementMatrix(np.array(rows, dtype=np.uint8))
