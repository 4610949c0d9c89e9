"""Baseline detectors: adaptive halving search and leave-one-out filters.

hwang_run is an adaptive group-testing search that assumes a known bound d
on the number of faulty sensors.  The leave-one-out methods run one Kalman
filter per excluded sensor and flag a single outlier test, so they target
the single-fault setting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .faults import FaultState, fault_state_from_support
from .kalman import default_burn_in, default_initial_state, run_filter
from .lds import SensorTrace, StateSpaceModel


@dataclass
class HwangState:
    """Mutable progress of the adaptive search."""

    uncertain: list[int]
    declared_faulty: list[int]
    declared_normal: list[int]
    d_remaining: int
    tests_used: int


@dataclass(frozen=True)
class HwangResult:
    fault_state: FaultState
    tests_used: int
    budget_exhausted: bool


def _pool_size(num_uncertain: int, d_remaining: int) -> int:
    return 2 ** int(math.floor(math.log2(num_uncertain / d_remaining)))


def _bisect_positive(pool: list[int], test_fn, state: HwangState, budget: int) -> int | None:
    """Classical halving inside a positive pool; returns the isolated sensor
    or None when the budget ran out first.  Untested remainder sensors stay
    uncertain (they are still in state.uncertain)."""
    current = list(pool)
    while len(current) > 1:
        if state.tests_used >= budget:
            return None
        half = current[: len(current) // 2]
        state.tests_used += 1
        if test_fn(half):
            current = half
        else:
            for i in half:
                if i in state.uncertain:
                    state.uncertain.remove(i)
                    state.declared_normal.append(i)
            current = current[len(current) // 2 :]
    return current[0]


def hwang_run(
    num_sensors: int,
    d: int,
    test_fn,
    seed: int,
    test_budget: int,
    classical_bisection: bool = False,
) -> HwangResult:
    """Adaptive search for up to d faulty sensors via pooled boolean tests.

    test_fn(pool) must return 0/1 for a list of sensor indices.  Pools of
    size 2^floor(log2(|uncertain| / d_remaining)) are drawn uniformly from
    the uncertain set; a negative clears the whole pool, while after a
    positive the next pool is redrawn from all uncertain sensors.  When the
    remaining fault budget exceeds half the uncertain set, sensors are
    tested individually; only individual positives reduce d_remaining.  With
    classical_bisection=True a positive pool is instead halved down to a
    single faulty sensor.

    Stops once d_remaining hits zero, no sensor is uncertain, or the test
    budget is exhausted (flagged in the result).
    """
    if num_sensors < 1:
        raise ValueError("num_sensors must be >= 1")
    if not (0 <= d <= num_sensors):
        raise ValueError("d must lie in [0, num_sensors]")
    if test_budget < 1:
        raise ValueError("test_budget must be >= 1")
    rng = np.random.default_rng(seed)
    state = HwangState(
        uncertain=list(range(num_sensors)),
        declared_faulty=[],
        declared_normal=[],
        d_remaining=d,
        tests_used=0,
    )
    exhausted = False
    while state.d_remaining > 0 and state.uncertain:
        if state.tests_used >= test_budget:
            exhausted = True
            break
        if state.d_remaining > len(state.uncertain) / 2:
            sensor = state.uncertain.pop(0)
            state.tests_used += 1
            if test_fn([sensor]):
                state.declared_faulty.append(sensor)
                state.d_remaining -= 1
            else:
                state.declared_normal.append(sensor)
            continue
        size = min(_pool_size(len(state.uncertain), state.d_remaining), len(state.uncertain))
        pool = sorted(int(i) for i in rng.choice(state.uncertain, size=size, replace=False))
        state.tests_used += 1
        if not test_fn(pool):
            pool_set = set(pool)
            state.uncertain = [i for i in state.uncertain if i not in pool_set]
            state.declared_normal.extend(pool)
        elif classical_bisection:
            found = _bisect_positive(pool, test_fn, state, test_budget)
            if found is None:
                exhausted = True
                break
            if found in state.uncertain:
                state.uncertain.remove(found)
            state.declared_faulty.append(found)
            state.d_remaining -= 1
        # plain variant: a positive pool stays uncertain and the next pool is redrawn
    return HwangResult(
        fault_state=fault_state_from_support(num_sensors, state.declared_faulty),
        tests_used=state.tests_used,
        budget_exhausted=exhausted,
    )


# --- leave-one-out filter baselines ----------------------------------------

LOO_VARIANTS = ("kobayashi", "da")


def loo_kalman_scores(
    model: StateSpaceModel,
    trace: SensorTrace,
    variant: str = "kobayashi",
    burn_in: int | None = None,
) -> np.ndarray:
    """Consistency score of each leave-one-out filter.

    kobayashi: mean squared one-step output prediction error of the filter
    that excludes sensor i, evaluated on the sensors it uses.  Excluding the
    faulty sensor gives the LOWEST score.

    da: mean infinity-norm gap between the leave-one-out state prediction
    and the all-sensors reference prediction.  Excluding the faulty sensor
    gives the LARGEST score (the reference is contaminated).
    """
    if variant not in LOO_VARIANTS:
        raise ValueError(f"variant must be one of {LOO_VARIANTS}")
    n = model.num_sensors
    if trace.num_sensors != n:
        raise ValueError("trace and model disagree on sensor count")
    if burn_in is None:
        burn_in = default_burn_in(trace.num_steps)
    if burn_in >= trace.num_steps:
        raise ValueError("burn_in must be smaller than the trace length")
    initial = default_initial_state(model.state_dim)
    scores = np.empty(n)
    reference = None
    if variant == "da":
        reference = run_filter(model, trace, list(range(n)), initial)
    for i in range(n):
        subset = [j for j in range(n) if j != i]
        preds = run_filter(model, trace, subset, initial)
        if variant == "kobayashi":
            predicted_outputs = preds @ model.C[subset, :].T
            err = trace.samples[burn_in:, subset] - predicted_outputs[burn_in:]
            scores[i] = float(np.mean(err * err))
        else:
            gap = np.abs(preds[burn_in:] - reference[burn_in:]).max(axis=1)
            scores[i] = float(gap.mean())
    return scores


def _spread(scores: np.ndarray, variant: str) -> float:
    if variant == "kobayashi":
        return float(np.median(scores) / scores.min())
    return float(scores.max() / np.median(scores))


def kobayashi_decide(scores: np.ndarray, spread_threshold: float) -> FaultState:
    """Flag the sensor whose exclusion fit best, if the spread is decisive.

    A spread at or below the threshold declares no fault.
    """
    scores = np.asarray(scores, dtype=float)
    n = scores.shape[0]
    if _spread(scores, "kobayashi") > spread_threshold:
        return fault_state_from_support(n, [int(np.argmin(scores))])
    return fault_state_from_support(n, [])


def da_decide(scores: np.ndarray, spread_threshold: float) -> FaultState:
    """Flag the sensor whose exclusion moved the state estimate most, if the
    spread is decisive.  A spread at or below the threshold declares no fault."""
    scores = np.asarray(scores, dtype=float)
    n = scores.shape[0]
    if _spread(scores, "da") > spread_threshold:
        return fault_state_from_support(n, [int(np.argmax(scores))])
    return fault_state_from_support(n, [])


def calibrate_loo_threshold(
    model: StateSpaceModel,
    clean_traces,
    variant: str = "kobayashi",
    quantile: float = 0.99,
) -> float:
    """Quantile of the clean-trace score spread; decisions above it flag a fault."""
    clean_traces = list(clean_traces)
    if len(clean_traces) < 2:
        raise ValueError("at least two clean traces are required")
    if not (0.0 < quantile <= 1.0):
        raise ValueError("quantile must lie in (0, 1]")
    spreads = [
        _spread(loo_kalman_scores(model, trace, variant), variant) for trace in clean_traces
    ]
    return float(np.quantile(np.asarray(spreads), quantile))
