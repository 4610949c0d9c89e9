"""Fault detection for sensor networks monitoring a linear dynamical system.

Group tests built from pairs of Kalman filters replace per-sensor checks;
combinatorial and Bayesian group-testing layers turn the pooled outcomes
into a small set of suspected sensors.
"""

from .baselines import HwangResult, calibrate_loo_threshold, da_decide, hwang_run, kobayashi_decide, loo_kalman_scores
from .bgt import (
    BeliefState,
    NoiseModel,
    TestRecord,
    balance_split_kf_bgt,
    bayes_update,
    default_prior,
    greedy_design_pool,
    map_decode,
    target_pool_probability,
    threshold_decode,
)
from .cgt import (
    MeasurementMatrix,
    TestResults,
    boolean_apply,
    find_disjunct_matrix,
    generate_random_matrix,
    is_d_disjunct,
    likelihood_decode,
    load_matrix,
    min_distance_decode,
    save_matrix,
    suggest_num_tests,
)
from .config import ExperimentConfig, config_from_text, load_config
from .errors import ConfigurationError, FeasibilityError, NumericalError, PoolTooSmallError
from .faults import (
    ExcessiveNoise,
    FaultState,
    MeanDrift,
    Nonlinearity,
    Spike,
    exact_fault_state,
    fault_state_from_support,
    inject,
    inject_scaled,
    sample_fault_state,
)
from .harness import (
    compare_methods,
    derive_seed,
    prepare_context,
    run_experiment,
    run_sweep,
    run_trial,
    simulate_boolean_test,
    write_csv,
)
from .kalman import (
    GroupTestConfig,
    GroupTestOutcome,
    KalmanState,
    calibrate_threshold,
    group_test,
    group_test_subgroups,
    kf_step,
    run_filter,
    split_pool,
)
from .lds import (
    SensorTrace,
    StateSpaceModel,
    StateTrajectory,
    generate_random_stable_model,
    load_model,
    load_trace,
    reduce_model_order,
    restrict_observation,
    save_model,
    save_trace,
    simulate,
    stationary_output_variances,
)

__version__ = "0.1.0"

__all__ = [
    "BeliefState",
    "ConfigurationError",
    "ExcessiveNoise",
    "ExperimentConfig",
    "FaultState",
    "FeasibilityError",
    "GroupTestConfig",
    "GroupTestOutcome",
    "HwangResult",
    "KalmanState",
    "MeanDrift",
    "MeasurementMatrix",
    "NoiseModel",
    "Nonlinearity",
    "NumericalError",
    "PoolTooSmallError",
    "SensorTrace",
    "Spike",
    "StateSpaceModel",
    "StateTrajectory",
    "TestRecord",
    "TestResults",
    "balance_split_kf_bgt",
    "bayes_update",
    "boolean_apply",
    "calibrate_loo_threshold",
    "calibrate_threshold",
    "compare_methods",
    "config_from_text",
    "da_decide",
    "default_prior",
    "derive_seed",
    "exact_fault_state",
    "fault_state_from_support",
    "find_disjunct_matrix",
    "generate_random_matrix",
    "generate_random_stable_model",
    "greedy_design_pool",
    "group_test",
    "group_test_subgroups",
    "hwang_run",
    "inject",
    "inject_scaled",
    "is_d_disjunct",
    "kf_step",
    "kobayashi_decide",
    "likelihood_decode",
    "load_config",
    "load_matrix",
    "load_model",
    "load_trace",
    "map_decode",
    "min_distance_decode",
    "prepare_context",
    "reduce_model_order",
    "restrict_observation",
    "run_experiment",
    "run_filter",
    "run_sweep",
    "run_trial",
    "sample_fault_state",
    "save_matrix",
    "save_model",
    "save_trace",
    "simulate",
    "simulate_boolean_test",
    "split_pool",
    "stationary_output_variances",
    "suggest_num_tests",
    "target_pool_probability",
    "threshold_decode",
    "write_csv",
]
