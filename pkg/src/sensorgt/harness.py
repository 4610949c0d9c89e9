"""Experiment harness: seeded trials, sweeps, and method comparisons.

Every random decision is keyed by a stable hash of (master seed, trial
index, purpose), so repeated runs are bit-identical and different methods
see the same fault placements, traces, and injections within a trial index.
"""

from __future__ import annotations

import hashlib
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import baselines, bgt, cgt, faults, kalman, lds
from .config import SWEEP_AXES, ExperimentConfig
from .errors import ConfigurationError, FeasibilityError, NumericalError, PoolTooSmallError

_TRIAL_ERRORS = (NumericalError, FeasibilityError, PoolTooSmallError, np.linalg.LinAlgError)


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from the given parts (order-sensitive)."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def simulate_boolean_test(pool, true_state: faults.FaultState, noise: bgt.NoiseModel, seed: int) -> int:
    """Boolean pool test with asymmetric flips: a quiet pool reads 1 with
    probability alpha, a hit pool reads 0 with probability beta."""
    pool = list(pool)
    if len(pool) == 0:
        raise ValueError("pool must be non-empty")
    hit = bool(true_state.flags[pool].any())
    r = np.random.default_rng(seed).random()
    if hit:
        return 0 if r < noise.beta else 1
    return 1 if r < noise.alpha else 0


@dataclass(frozen=True)
class TrialMetrics:
    detection_rate: float
    false_alarm_rate: float
    tests_used: int
    seed: int


@dataclass(frozen=True)
class AggregateRow:
    method: str
    axis_name: str
    axis_value: float | int | str
    trials: int
    failures: int
    detection_rate: float
    false_alarm_rate: float
    tests_used_mean: float


def score_trial(decoded: faults.FaultState, truth: faults.FaultState, tests_used: int, seed: int) -> TrialMetrics:
    faulty = set(truth.support())
    detected = set(decoded.support())
    n = truth.num_sensors
    if faulty:
        detection = len(faulty & detected) / len(faulty)
    else:
        detection = 1.0 if not detected else 0.0
    normal = n - len(faulty)
    false_alarm = (len(detected - faulty) / normal) if normal > 0 else 0.0
    return TrialMetrics(detection, false_alarm, tests_used, seed)


# --- kalman-mode shared context --------------------------------------------


@dataclass(frozen=True)
class ExperimentContext:
    """Per-experiment state shared across trials in kalman_tests mode."""

    true_model: lds.StateSpaceModel
    filter_model: lds.StateSpaceModel
    threshold: float
    burn_in: int
    loo_thresholds: dict


def build_true_model(config: ExperimentConfig) -> lds.StateSpaceModel:
    model = lds.generate_random_stable_model(
        state_dim=config.model_state_dim,
        num_sensors=config.num_sensors,
        spectral_radius=config.model_spectral_radius,
        noise_scales=(config.model_process_noise, 0.0),
        seed=derive_seed(config.seed, "model"),
    )
    model = lds.normalize_output_variance(model, config.model_signal_variance)
    meas = config.model_meas_noise_fraction * config.model_signal_variance
    return lds.StateSpaceModel(
        A=model.A,
        C=model.C,
        process_noise_cov=model.process_noise_cov,
        meas_noise_cov=meas * np.eye(config.num_sensors),
        B=model.B,
    )


def _clean_traces(config: ExperimentConfig, model: lds.StateSpaceModel) -> list[lds.SensorTrace]:
    return [
        lds.simulate(
            model,
            config.model_trace_length,
            seed=derive_seed(config.seed, "calibration_trace", i),
            sample_period=config.model_sample_period,
        )[1]
        for i in range(config.kalman_calibration_traces)
    ]


def prepare_context(config: ExperimentConfig) -> ExperimentContext | None:
    """Build the shared model and calibrated thresholds (kalman mode only)."""
    if config.mode != "kalman_tests":
        return None
    true_model = build_true_model(config)
    filter_model = lds.reduce_model_order(true_model, config.filter_order)
    clean = _clean_traces(config, true_model)
    if config.kalman_threshold >= 0:
        threshold = config.kalman_threshold
    else:
        threshold = kalman.calibrate_threshold(
            filter_model,
            clean,
            pool_size=config.calibration_pool_size,
            quantile=config.kalman_quantile,
            num_samples=config.kalman_calibration_samples,
            seed=derive_seed(config.seed, "calibration"),
            statistic_kind=config.kalman_statistic,
        )
    loo_thresholds = {}
    if config.method in ("loo_kobayashi", "loo_da"):
        variant = "kobayashi" if config.method == "loo_kobayashi" else "da"
        loo_thresholds[variant] = baselines.calibrate_loo_threshold(
            filter_model, clean, variant, config.loo_quantile
        )
    burn_in = int(config.kalman_burn_in_fraction * config.model_trace_length)
    return ExperimentContext(
        true_model=true_model,
        filter_model=filter_model,
        threshold=threshold,
        burn_in=burn_in,
        loo_thresholds=loo_thresholds,
    )


def _group_test_config(config: ExperimentConfig, context: ExperimentContext) -> kalman.GroupTestConfig:
    return kalman.GroupTestConfig(
        threshold=context.threshold,
        burn_in=context.burn_in,
        statistic_kind=config.kalman_statistic,
        joseph_stabilization=config.kalman_joseph,
    )


# --- per-trial data ---------------------------------------------------------


def _trial_fault_state(config: ExperimentConfig, trial_index: int) -> faults.FaultState:
    seed = derive_seed(config.seed, trial_index, "fault")
    if config.fault_count_mode == "exact":
        return faults.exact_fault_state(config.num_sensors, config.d_max, seed)
    return faults.sample_fault_state(config.num_sensors, config.d_max, seed)


def _trial_faulty_trace(
    config: ExperimentConfig, context: ExperimentContext, trial_index: int, truth: faults.FaultState
) -> lds.SensorTrace:
    _, trace = lds.simulate(
        context.true_model,
        config.model_trace_length,
        seed=derive_seed(config.seed, trial_index, "trace"),
        sample_period=config.model_sample_period,
    )
    if truth.num_faulty == 0:
        return trace
    return faults.inject_scaled(
        trace,
        truth,
        config.fault_kind,
        seed=derive_seed(config.seed, trial_index, "inject"),
        overrides=config.fault_overrides(),
    )


# --- boolean-mode method runners -------------------------------------------


def _boolean_test_fn(truth: faults.FaultState, noise: bgt.NoiseModel, method_seed: int):
    counter = itertools.count()

    def test_fn(pool) -> int:
        return simulate_boolean_test(pool, truth, noise, derive_seed(method_seed, "test", next(counter)))

    return test_fn


def _run_cgt_boolean(config: ExperimentConfig, truth: faults.FaultState, method_seed: int):
    noise = bgt.NoiseModel(config.alpha, config.beta)
    matrix_seed = derive_seed(method_seed, "matrix")
    if config.cgt_disjunct_required:
        matrix = cgt.find_disjunct_matrix(
            config.num_tests, config.num_sensors, config.decode_d, matrix_seed, config.cgt_density
        )
    else:
        matrix = cgt.generate_random_matrix(
            config.num_tests, config.num_sensors, config.cgt_density, matrix_seed
        )
    test_fn = _boolean_test_fn(truth, noise, method_seed)
    outcomes = np.array([test_fn(matrix.row_pool(i)) for i in range(matrix.num_tests)], dtype=np.uint8)
    decoded = cgt.min_distance_decode(
        matrix, cgt.TestResults(outcomes), config.decode_d, seed=derive_seed(method_seed, "decode")
    )
    return decoded, matrix.num_tests


def run_bgt_boolean(
    config: ExperimentConfig,
    truth: faults.FaultState,
    method_seed: int,
    checkpoints=None,
):
    """Sequential BGT on simulated boolean tests.

    Returns (decoded_state, tests_used, snapshots) where snapshots maps each
    requested checkpoint budget to the state decoded from the belief at that
    point; the sequential procedure makes a snapshot at budget b identical
    to a full run with num_tests=b.
    """
    noise = bgt.NoiseModel(config.alpha, config.beta)
    belief = bgt.BeliefState.uniform(config.num_sensors, config.prior_normal)
    exploration = bgt.random_initial_pools(
        config.num_sensors,
        min(config.exploration_pools, config.num_tests),
        seed=derive_seed(method_seed, "exploration"),
    )
    test_fn = _boolean_test_fn(truth, noise, method_seed)
    snapshots = {}
    checkpoints = sorted(checkpoints) if checkpoints else []
    tests_used = 0
    for t in range(config.num_tests):
        if t < len(exploration):
            pool = exploration[t]
        else:
            pool = bgt.greedy_design_pool(belief, noise, derive_seed(method_seed, "pool", t))
        previous = belief
        record = bgt.TestRecord(tuple(pool), test_fn(pool))
        belief = bgt.bayes_update(belief, record, noise)
        tests_used = t + 1
        if tests_used in checkpoints:
            snapshots[tests_used] = bgt.threshold_decode(belief, config.sigma)
        if (
            config.convergence_stop
            and t >= len(exploration)
            and bgt.has_converged(previous, belief, config.epsilon)
        ):
            break
    decoded = bgt.threshold_decode(belief, config.sigma)
    return decoded, tests_used, snapshots


def _run_hwang_boolean(config: ExperimentConfig, truth: faults.FaultState, method_seed: int):
    noise = bgt.NoiseModel(config.alpha, config.beta)
    test_fn = _boolean_test_fn(truth, noise, method_seed)
    result = baselines.hwang_run(
        config.num_sensors,
        config.assumed_d,
        test_fn,
        seed=derive_seed(method_seed, "pools"),
        test_budget=config.num_tests,
        classical_bisection=config.hwang_classical_bisection,
    )
    return result.fault_state, result.tests_used


# --- kalman-mode method runners ---------------------------------------------


def _pad_small_pool(pool: list[int], belief: bgt.BeliefState, num_sensors: int) -> list[int]:
    """Pools below splitting size borrow the most-likely-normal outside
    sensor for estimation; belief updates keep the original pool."""
    padded = list(pool)
    outside = sorted(set(range(num_sensors)) - set(pool), key=lambda i: (-belief.p[i], i))
    k = 0
    while len(padded) < 2:
        padded.append(outside[k])
        k += 1
    return padded


def _run_cgt_kalman(
    config: ExperimentConfig,
    context: ExperimentContext,
    trace: lds.SensorTrace,
    method_seed: int,
):
    matrix_seed = derive_seed(method_seed, "matrix")
    if config.cgt_disjunct_required:
        matrix = cgt.find_disjunct_matrix(
            config.num_tests, config.num_sensors, config.decode_d, matrix_seed, config.cgt_density
        )
    else:
        matrix = cgt.generate_random_matrix(
            config.num_tests, config.num_sensors, config.cgt_density, matrix_seed
        )
    gt_cfg = _group_test_config(config, context)
    outcomes = np.empty(matrix.num_tests, dtype=np.uint8)
    for i in range(matrix.num_tests):
        outcome = kalman.group_test(
            context.filter_model, trace, matrix.row_pool(i), gt_cfg, derive_seed(method_seed, "split", i)
        )
        outcomes[i] = outcome.decision
    decoded = cgt.min_distance_decode(
        matrix, cgt.TestResults(outcomes), config.decode_d, seed=derive_seed(method_seed, "decode")
    )
    return decoded, matrix.num_tests


def _run_bgt_kalman(
    config: ExperimentConfig,
    context: ExperimentContext,
    trace: lds.SensorTrace,
    method_seed: int,
    balanced_split: bool,
):
    noise = bgt.NoiseModel(config.alpha, config.beta)
    belief = bgt.BeliefState.uniform(config.num_sensors, config.prior_normal)
    exploration = bgt.random_initial_pools(
        config.num_sensors,
        min(config.exploration_pools, config.num_tests),
        seed=derive_seed(method_seed, "exploration"),
    )
    gt_cfg = _group_test_config(config, context)
    tests_used = 0
    for t in range(config.num_tests):
        if t < len(exploration):
            pool = exploration[t]
        else:
            pool = bgt.greedy_design_pool(belief, noise, derive_seed(method_seed, "pool", t))
        if balanced_split:
            group_a, group_b = bgt.balance_split_kf_bgt(pool, belief, config.min_subgroup)
            outcome = kalman.group_test_subgroups(context.filter_model, trace, group_a, group_b, gt_cfg)
        else:
            members = _pad_small_pool(pool, belief, config.num_sensors)
            outcome = kalman.group_test(
                context.filter_model, trace, members, gt_cfg, derive_seed(method_seed, "split", t)
            )
        previous = belief
        belief = bgt.bayes_update(belief, bgt.TestRecord(tuple(pool), outcome.decision), noise)
        tests_used = t + 1
        if (
            config.convergence_stop
            and t >= len(exploration)
            and bgt.has_converged(previous, belief, config.epsilon)
        ):
            break
    return bgt.threshold_decode(belief, config.sigma), tests_used


def _run_loo_kalman(
    config: ExperimentConfig,
    context: ExperimentContext,
    trace: lds.SensorTrace,
):
    variant = "kobayashi" if config.method == "loo_kobayashi" else "da"
    scores = baselines.loo_kalman_scores(context.filter_model, trace, variant, context.burn_in)
    threshold = context.loo_thresholds[variant]
    if variant == "kobayashi":
        decoded = baselines.kobayashi_decide(scores, threshold)
    else:
        decoded = baselines.da_decide(scores, threshold)
    return decoded, config.num_sensors


# --- trial and experiment drivers -------------------------------------------


def run_trial(config: ExperimentConfig, trial_index: int, context: ExperimentContext | None = None) -> TrialMetrics:
    """One seeded trial of the configured method; returns its metrics."""
    if config.mode == "kalman_tests" and context is None:
        context = prepare_context(config)
    truth = _trial_fault_state(config, trial_index)
    method_seed = derive_seed(config.seed, trial_index, config.method)

    if config.mode == "boolean_tests":
        if config.method == "cgt":
            decoded, used = _run_cgt_boolean(config, truth, method_seed)
        elif config.method == "bgt":
            decoded, used, _ = run_bgt_boolean(config, truth, method_seed)
        elif config.method == "hwang":
            decoded, used = _run_hwang_boolean(config, truth, method_seed)
        else:  # pragma: no cover - rejected by config validation
            raise ConfigurationError(f"method {config.method} not available in boolean_tests mode")
        return score_trial(decoded, truth, used, method_seed)

    trace = _trial_faulty_trace(config, context, trial_index, truth)
    if config.method == "cgt":
        decoded, used = _run_cgt_kalman(config, context, trace, method_seed)
    elif config.method == "bgt":
        decoded, used = _run_bgt_kalman(config, context, trace, method_seed, balanced_split=False)
    elif config.method == "kf_bgt":
        decoded, used = _run_bgt_kalman(config, context, trace, method_seed, balanced_split=True)
    elif config.method == "hwang":
        gt_cfg = _group_test_config(config, context)
        counter = itertools.count()

        def test_fn(pool) -> int:
            if len(pool) == 1:
                members = _pad_small_pool(
                    list(pool), bgt.BeliefState.uniform(config.num_sensors, 1.0), config.num_sensors
                )
            else:
                members = list(pool)
            outcome = kalman.group_test(
                context.filter_model, trace, members, gt_cfg, derive_seed(method_seed, "split", next(counter))
            )
            return outcome.decision

        result = baselines.hwang_run(
            config.num_sensors,
            config.assumed_d,
            test_fn,
            seed=derive_seed(method_seed, "pools"),
            test_budget=config.num_tests,
            classical_bisection=config.hwang_classical_bisection,
        )
        decoded, used = result.fault_state, result.tests_used
    else:
        decoded, used = _run_loo_kalman(config, context, trace)
    return score_trial(decoded, truth, used, method_seed)


def _safe_trial(args):
    config, trial_index, context = args
    try:
        return trial_index, run_trial(config, trial_index, context), None
    except _TRIAL_ERRORS as exc:
        return trial_index, None, f"{type(exc).__name__}: {exc}"


def run_experiment(
    config: ExperimentConfig,
    jobs: int = 1,
    context: ExperimentContext | None = None,
    axis_name: str = "none",
    axis_value=0,
) -> tuple[AggregateRow, list[TrialMetrics | None]]:
    """Run all trials; aggregates exclude failed trials but count them."""
    if context is None:
        context = prepare_context(config)
    tasks = [(config, i, context) for i in range(config.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_safe_trial, tasks, chunksize=max(1, config.trials // (4 * jobs))))
    else:
        outcomes = [_safe_trial(t) for t in tasks]
    outcomes.sort(key=lambda item: item[0])
    per_trial: list[TrialMetrics | None] = [m for _, m, _ in outcomes]
    good = [m for m in per_trial if m is not None]
    failures = config.trials - len(good)
    if good:
        detection = float(np.mean([m.detection_rate for m in good]))
        false_alarm = float(np.mean([m.false_alarm_rate for m in good]))
        tests_mean = float(np.mean([m.tests_used for m in good]))
    else:
        detection = false_alarm = tests_mean = float("nan")
    row = AggregateRow(
        method=config.method,
        axis_name=axis_name,
        axis_value=axis_value,
        trials=len(good),
        failures=failures,
        detection_rate=detection,
        false_alarm_rate=false_alarm,
        tests_used_mean=tests_mean,
    )
    return row, per_trial


def apply_sweep_value(config: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "num_tests":
        return config.with_overrides(num_tests=int(value))
    if axis == "threshold":
        if config.mode == "kalman_tests":
            return config.with_overrides(kalman_threshold=float(value))
        return config.with_overrides(sigma=float(value))
    if axis == "alpha":
        return config.with_overrides(alpha=float(value), beta=float(value))
    if axis == "prior":
        return config.with_overrides(prior=float(value))
    if axis == "model_order":
        if config.mode != "kalman_tests":
            raise ConfigurationError("model_order sweeps require kalman_tests mode")
        return config.with_overrides(filter_state_dim=int(value))
    raise ConfigurationError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def run_sweep(config: ExperimentConfig, axis: str, values, jobs: int = 1) -> list[AggregateRow]:
    """One aggregate row per axis value, in the given order."""
    rows = []
    for value in values:
        derived = apply_sweep_value(config, axis, value)
        row, _ = run_experiment(derived, jobs=jobs, axis_name=axis, axis_value=value)
        rows.append(row)
    return rows


def compare_methods(
    configs, jobs: int = 1
) -> list[tuple[ExperimentConfig, AggregateRow, list[TrialMetrics | None]]]:
    """Run several method configs against identical per-trial data.

    All configs must agree on everything that defines the data stream
    (sensors, seeds, trials, fault setup, mode); fault placements, traces,
    and injections are then paired across methods by trial index.
    """
    configs = list(configs)
    if len(configs) < 2:
        raise ValueError("compare_methods needs at least two configs")
    shared_fields = (
        "mode",
        "num_sensors",
        "d_max",
        "trials",
        "seed",
        "fault_count_mode",
        "fault_kind",
    )
    reference = configs[0]
    for other in configs[1:]:
        for name in shared_fields:
            if getattr(other, name) != getattr(reference, name):
                raise ValueError(f"compare_methods configs disagree on {name}")
    results = []
    for cfg in configs:
        row, per_trial = run_experiment(cfg, jobs=jobs)
        results.append((cfg, row, per_trial))
    return results


# --- CSV output --------------------------------------------------------------

CSV_HEADER = "method,axis_name,axis_value,trials,failures,detection_rate,false_alarm_rate,tests_used_mean"


def _fmt_number(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".6g")


def rows_to_csv(rows) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                (
                    r.method,
                    r.axis_name,
                    _fmt_number(r.axis_value),
                    str(r.trials),
                    str(r.failures),
                    _fmt_number(r.detection_rate),
                    _fmt_number(r.false_alarm_rate),
                    _fmt_number(r.tests_used_mean),
                )
            )
        )
    return "\n".join(lines) + "\n"


def write_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(rows_to_csv(rows))
