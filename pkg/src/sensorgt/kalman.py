"""Kalman filtering and the split-pool group test.

A pool of sensors is split into two balanced subgroups; each subgroup drives
its own filter on the correspondingly restricted observation model.  With
healthy sensors both filters track the same latent state, so the discrepancy
between their one-step-ahead state predictions stays small; a faulty sensor
in one subgroup drags its filter away and the discrepancy statistic crosses
a threshold calibrated on clean data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, PoolTooSmallError
from .lds import SensorTrace, StateSpaceModel, restrict_observation

_COND_LIMIT = 1e12

STATISTIC_KINDS = ("max_inf_norm", "mean_inf_norm")

DEFAULT_PRIOR_COV_SCALE = 10.0
DEFAULT_BURN_IN_FRACTION = 0.1


@dataclass(frozen=True)
class KalmanState:
    """Filter state: mean estimate and covariance."""

    x_hat: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        x = np.array(self.x_hat, dtype=float)
        p = np.array(self.P, dtype=float)
        if x.ndim != 1 or p.shape != (x.shape[0], x.shape[0]):
            raise ValueError("x_hat must be (q,) and P must be (q, q)")
        if not np.allclose(p, p.T, atol=1e-9, rtol=0.0):
            raise ValueError("P must be symmetric")
        if np.linalg.eigvalsh(0.5 * (p + p.T)).min() < -1e-9:
            raise ValueError("P must be positive semidefinite")
        x.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "x_hat", x)
        object.__setattr__(self, "P", p)


@dataclass(frozen=True)
class GroupTestConfig:
    """Decision settings for a split-pool group test.

    burn_in steps are discarded before aggregating the discrepancy;
    statistic_kind selects max or mean of the per-step infinity norm.
    """

    threshold: float
    burn_in: int
    statistic_kind: str = "max_inf_norm"
    joseph_stabilization: bool = False

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be nonnegative")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")
        if self.statistic_kind not in STATISTIC_KINDS:
            raise ValueError(f"statistic_kind must be one of {STATISTIC_KINDS}")


@dataclass(frozen=True)
class GroupTestOutcome:
    statistic: float
    decision: int  # 1 = fault suspected in the pool


def default_initial_state(state_dim: int, prior_cov_scale: float = DEFAULT_PRIOR_COV_SCALE) -> KalmanState:
    return KalmanState(np.zeros(state_dim), prior_cov_scale * np.eye(state_dim))


def _check_innovation_cov(s: np.ndarray, step: int) -> np.ndarray:
    """Cholesky-factor the innovation covariance, rejecting singular cases."""
    try:
        ell = np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        raise NumericalError(f"innovation covariance not positive definite at step {step}") from None
    diag = np.diagonal(ell)
    if (diag.max() / diag.min()) ** 2 > 1e6:  # cheap trigger, confirm precisely
        w = np.linalg.eigvalsh(s)
        cond = w.max() / w.min() if w.min() > 0 else np.inf
        if cond > _COND_LIMIT:
            raise NumericalError(
                f"innovation covariance numerically singular at step {step}: condition estimate {cond:.3e}"
            )
    return ell


def _predict(x, p, model):
    x = model.A @ x
    p = model.A @ p @ model.A.T + model.process_noise_cov
    return x, p


def _update(x, p, model, y, step, joseph):
    q = x.shape[0]
    pct = p @ model.C.T
    s = model.C @ pct + model.meas_noise_cov
    _check_innovation_cov(s, step)
    k = np.linalg.solve(s, pct.T).T
    x = x + k @ (y - model.C @ x)
    if joseph:
        ikc = np.eye(q) - k @ model.C
        p = ikc @ p @ ikc.T + k @ model.meas_noise_cov @ k.T
    else:
        p = p - k @ (model.C @ p)
    p = 0.5 * (p + p.T)
    return x, p


def kf_step(
    state: KalmanState,
    model: StateSpaceModel,
    y: np.ndarray,
    u: np.ndarray | None = None,
    joseph: bool = False,
) -> KalmanState:
    """One predict/update cycle; returns the updated (filtered) state."""
    y = np.asarray(y, dtype=float)
    if y.shape != (model.num_sensors,):
        raise ValueError(f"y must have shape ({model.num_sensors},)")
    x, p = _predict(state.x_hat, state.P, model)
    if u is not None:
        if model.B is None:
            raise ValueError("model has no B matrix but an input was supplied")
        x = x + model.B @ np.asarray(u, dtype=float)
    x, p = _update(x, p, model, y, 0, joseph)
    return KalmanState(x, p)


def run_filter(
    model: StateSpaceModel,
    trace: SensorTrace,
    sensor_subset,
    initial: KalmanState | None = None,
    joseph: bool = False,
) -> np.ndarray:
    """Filter the trace through the given sensors; returns (T, q) one-step
    state predictions (the prediction made before each measurement update)."""
    subset = list(sensor_subset)
    sub = restrict_observation(model, subset)
    ys = trace.samples[:, subset]
    if initial is None:
        initial = default_initial_state(model.state_dim)
    x, p = initial.x_hat.copy(), initial.P.copy()
    t = trace.num_steps
    preds = np.empty((t, model.state_dim))
    a, c = sub.A, sub.C
    at, ct = a.T, c.T
    qcov, rcov = sub.process_noise_cov, sub.meas_noise_cov
    for k in range(t):
        x = a @ x
        p = a @ p @ at + qcov
        preds[k] = x
        pct = p @ ct
        s = c @ pct + rcov
        _check_innovation_cov(s, k)
        gain = np.linalg.solve(s, pct.T).T
        x = x + gain @ (ys[k] - c @ x)
        if joseph:
            ikc = np.eye(x.shape[0]) - gain @ c
            p = ikc @ p @ ikc.T + gain @ rcov @ gain.T
        else:
            p = p - gain @ (c @ p)
        p = 0.5 * (p + p.T)
    return preds


def split_pool(pool, seed: int) -> tuple[list[int], list[int]]:
    """Random balanced bipartition of the pool (sizes differ by at most 1)."""
    pool = list(pool)
    if len(pool) < 2:
        raise PoolTooSmallError(f"pool of size {len(pool)} cannot be split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pool))
    half = len(pool) // 2
    group_a = [pool[i] for i in order[:half]]
    group_b = [pool[i] for i in order[half:]]
    return group_a, group_b


def discrepancy_statistic(preds_a: np.ndarray, preds_b: np.ndarray, config: GroupTestConfig) -> float:
    if config.burn_in >= preds_a.shape[0]:
        raise ValueError("burn_in must be smaller than the trace length")
    diffs = np.abs(preds_a[config.burn_in :] - preds_b[config.burn_in :]).max(axis=1)
    if config.statistic_kind == "max_inf_norm":
        return float(diffs.max())
    return float(diffs.mean())


def group_test_subgroups(
    model: StateSpaceModel,
    trace: SensorTrace,
    subset_a,
    subset_b,
    config: GroupTestConfig,
) -> GroupTestOutcome:
    """Group test with explicit subgroups (callers control the split)."""
    initial = default_initial_state(model.state_dim)
    preds_a = run_filter(model, trace, subset_a, initial, config.joseph_stabilization)
    preds_b = run_filter(model, trace, subset_b, initial, config.joseph_stabilization)
    stat = discrepancy_statistic(preds_a, preds_b, config)
    return GroupTestOutcome(statistic=stat, decision=int(stat > config.threshold))


def group_test(
    model: StateSpaceModel,
    trace: SensorTrace,
    pool,
    config: GroupTestConfig,
    seed: int,
) -> GroupTestOutcome:
    """Split the pool randomly and compare the two subgroup filters."""
    group_a, group_b = split_pool(pool, seed)
    return group_test_subgroups(model, trace, group_a, group_b, config)


def default_burn_in(num_steps: int) -> int:
    return int(DEFAULT_BURN_IN_FRACTION * num_steps)


def calibrate_threshold(
    model: StateSpaceModel,
    clean_traces,
    pool_size: int,
    quantile: float = 0.99,
    num_samples: int = 200,
    seed: int = 0,
    statistic_kind: str = "max_inf_norm",
) -> float:
    """Empirical quantile of the clean discrepancy statistic.

    Random pools of the given size are drawn over the clean traces and the
    statistic of each split is recorded; the returned threshold is the
    requested quantile of that sample.
    """
    clean_traces = list(clean_traces)
    if len(clean_traces) < 1:
        raise ValueError("at least one clean trace is required")
    if num_samples < 50:
        raise ValueError("num_samples must be >= 50 for a stable quantile")
    if not (0.0 < quantile <= 1.0):
        raise ValueError("quantile must lie in (0, 1]")
    n = model.num_sensors
    if not (2 <= pool_size <= n):
        raise ValueError("pool_size must lie in [2, num_sensors]")
    rng = np.random.default_rng(seed)
    stats = np.empty(num_samples)
    probe = GroupTestConfig(
        threshold=np.inf,
        burn_in=default_burn_in(clean_traces[0].num_steps),
        statistic_kind=statistic_kind,
    )
    for i in range(num_samples):
        trace = clean_traces[i % len(clean_traces)]
        pool = rng.choice(n, size=pool_size, replace=False)
        outcome = group_test(model, trace, pool, probe, seed=int(rng.integers(0, 2**63)))
        stats[i] = outcome.statistic
    return float(np.quantile(stats, quantile))


def subgroup_discrepancy_profile(
    model: StateSpaceModel,
    trace: SensorTrace,
    group_sizes,
    fault_spec,
    seed: int,
    num_repeats: int = 10,
) -> list[dict]:
    """Mean clean and faulty discrepancy statistics per pool size.

    For each size, random pools are split and measured on the clean trace,
    then again after injecting ``fault_spec`` into one random pool member.
    Exposes how the statistic's scale grows with the subgroup size.
    """
    from .faults import fault_state_from_support, inject

    rng = np.random.default_rng(seed)
    probe = GroupTestConfig(threshold=np.inf, burn_in=default_burn_in(trace.num_steps))
    n = model.num_sensors
    rows = []
    for size in group_sizes:
        if not (2 <= size <= n):
            raise ValueError(f"group size {size} out of range [2, {n}]")
        clean_stats = np.empty(num_repeats)
        faulty_stats = np.empty(num_repeats)
        for r in range(num_repeats):
            pool = rng.choice(n, size=size, replace=False)
            split_seed = int(rng.integers(0, 2**63))
            clean_stats[r] = group_test(model, trace, pool, probe, split_seed).statistic
            victim = int(rng.choice(pool))
            bad = inject(trace, fault_state_from_support(n, [victim]), fault_spec, int(rng.integers(0, 2**63)))
            faulty_stats[r] = group_test(model, bad, pool, probe, split_seed).statistic
        rows.append(
            {
                "group_size": int(size),
                "clean_statistic": float(clean_stats.mean()),
                "faulty_statistic": float(faulty_stats.mean()),
            }
        )
    return rows
