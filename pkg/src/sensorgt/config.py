"""Flat key=value experiment configuration.

Config files are UTF-8 text, one ``namespace.key=value`` pair per line;
blank lines and lines starting with ``#`` are ignored.  Unknown keys and
duplicate keys are errors so typos cannot silently change an experiment.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import ConfigurationError

MODES = ("boolean_tests", "kalman_tests")
METHODS = ("cgt", "bgt", "kf_bgt", "hwang", "loo_kobayashi", "loo_da")
FAULT_KINDS = ("spike", "nonlinearity", "mean_drift", "excessive_noise")
FAULT_COUNT_MODES = ("uniform", "exact")
STATISTICS = ("max_inf_norm", "mean_inf_norm")
SWEEP_AXES = ("num_tests", "threshold", "alpha", "prior", "model_order")

# Kalman-mode trials are quadratic-ish in N; refuse huge networks unless the
# caller explicitly opts in.
KALMAN_MODE_SENSOR_LIMIT = 200


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment settings; field defaults are the config defaults."""

    mode: str = "boolean_tests"
    method: str = "bgt"
    num_sensors: int = 18
    d_max: int = 2
    num_tests: int = 16
    trials: int = 100
    seed: int = 0
    fault_count_mode: str = "uniform"
    allow_large_kalman: bool = False

    # boolean test channel (also the noise model bgt assumes)
    alpha: float = 0.01
    beta: float = 0.01

    # bgt decoder / design
    sigma: float = 0.2
    prior: float = -1.0  # sentinel: 1 - d_max / num_sensors
    exploration_pools: int = 0
    epsilon: float = 1e-3
    min_subgroup: int = 3
    convergence_stop: bool = False

    # fault injection
    fault_kind: str = "spike"
    spike_rate: float = 0.05
    spike_amplitude_scale: float = 1.0
    nonlinearity_range_fraction: float = 0.8
    nonlinearity_slope: float = 0.3
    mean_drift_max_freq_hz: float = 5.0
    mean_drift_magnitude_scale: float = 0.5
    excessive_noise_variance_scale: float = 0.5

    # synthetic model (kalman mode)
    model_state_dim: int = 20
    model_spectral_radius: float = 0.95
    model_process_noise: float = 1e-3
    model_signal_variance: float = 64.0
    model_meas_noise_fraction: float = 0.10
    model_trace_length: int = 2000
    model_sample_period: float = 0.005
    filter_state_dim: int = -1  # sentinel: same as model_state_dim

    # kalman group test
    kalman_threshold: float = -1.0  # sentinel: calibrate
    kalman_quantile: float = 0.99
    kalman_calibration_samples: int = 200
    kalman_calibration_traces: int = 4
    kalman_burn_in_fraction: float = 0.1
    kalman_statistic: str = "max_inf_norm"
    kalman_joseph: bool = False
    kalman_pool_size: int = -1  # sentinel: round(num_sensors * cgt_density)

    # cgt
    cgt_density: float = 0.5
    cgt_decode_d: int = -1  # sentinel: d_max
    cgt_disjunct_required: bool = False

    # hwang
    hwang_assumed_d: int = -1  # sentinel: d_max
    hwang_classical_bisection: bool = False

    # leave-one-out baselines
    loo_quantile: float = 0.99

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"experiment.mode must be one of {MODES}")
        if self.method not in METHODS:
            raise ConfigurationError(f"experiment.method must be one of {METHODS}")
        if self.num_sensors < 2:
            raise ConfigurationError("experiment.num_sensors must be >= 2")
        if not (0 <= self.d_max <= self.num_sensors):
            raise ConfigurationError("experiment.d_max must lie in [0, num_sensors]")
        if self.num_tests < 1:
            raise ConfigurationError("experiment.num_tests must be >= 1")
        if self.trials < 1:
            raise ConfigurationError("experiment.trials must be >= 1")
        if self.fault_count_mode not in FAULT_COUNT_MODES:
            raise ConfigurationError(f"experiment.fault_count_mode must be one of {FAULT_COUNT_MODES}")
        if not (0.0 <= self.alpha < 1.0 and 0.0 <= self.beta < 1.0 and self.alpha + self.beta < 1.0):
            raise ConfigurationError("bgt.alpha/bgt.beta must lie in [0,1) with alpha+beta < 1")
        if not (0.0 < self.sigma < 1.0):
            raise ConfigurationError("bgt.sigma must lie in (0, 1)")
        if self.prior != -1.0 and not (0.0 < self.prior < 1.0):
            raise ConfigurationError("bgt.prior must lie in (0, 1) or be -1 for the default")
        if self.exploration_pools < 0:
            raise ConfigurationError("bgt.exploration_pools must be nonnegative")
        if self.fault_kind not in FAULT_KINDS:
            raise ConfigurationError(f"fault.kind must be one of {FAULT_KINDS}")
        if self.kalman_statistic not in STATISTICS:
            raise ConfigurationError(f"kalman.statistic must be one of {STATISTICS}")
        if self.mode == "kalman_tests":
            if self.num_sensors > KALMAN_MODE_SENSOR_LIMIT and not self.allow_large_kalman:
                raise ConfigurationError(
                    f"kalman_tests mode with num_sensors > {KALMAN_MODE_SENSOR_LIMIT} requires "
                    "experiment.allow_large_kalman=true"
                )
        else:
            if self.method in ("kf_bgt", "loo_kobayashi", "loo_da"):
                raise ConfigurationError(f"method {self.method} requires experiment.mode=kalman_tests")

    # resolved values -------------------------------------------------------

    @property
    def prior_normal(self) -> float:
        if self.prior != -1.0:
            return self.prior
        return 1.0 - self.d_max / self.num_sensors

    @property
    def decode_d(self) -> int:
        return self.d_max if self.cgt_decode_d == -1 else self.cgt_decode_d

    @property
    def assumed_d(self) -> int:
        return self.d_max if self.hwang_assumed_d == -1 else self.hwang_assumed_d

    @property
    def filter_order(self) -> int:
        return self.model_state_dim if self.filter_state_dim == -1 else self.filter_state_dim

    @property
    def calibration_pool_size(self) -> int:
        if self.kalman_pool_size != -1:
            return self.kalman_pool_size
        return max(2, round(self.num_sensors * self.cgt_density))

    def fault_overrides(self) -> dict:
        if self.fault_kind == "spike":
            return {"rate": self.spike_rate, "amplitude_scale": self.spike_amplitude_scale}
        if self.fault_kind == "nonlinearity":
            return {
                "range_fraction": self.nonlinearity_range_fraction,
                "slope": self.nonlinearity_slope,
            }
        if self.fault_kind == "mean_drift":
            return {
                "max_freq_hz": self.mean_drift_max_freq_hz,
                "magnitude_scale": self.mean_drift_magnitude_scale,
            }
        return {"variance_scale": self.excessive_noise_variance_scale}

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)


# maps config-file keys to ExperimentConfig fields
KEY_FIELDS: dict[str, tuple[str, type]] = {
    "experiment.mode": ("mode", str),
    "experiment.method": ("method", str),
    "experiment.num_sensors": ("num_sensors", int),
    "experiment.d_max": ("d_max", int),
    "experiment.num_tests": ("num_tests", int),
    "experiment.trials": ("trials", int),
    "experiment.seed": ("seed", int),
    "experiment.fault_count_mode": ("fault_count_mode", str),
    "experiment.allow_large_kalman": ("allow_large_kalman", bool),
    "bgt.alpha": ("alpha", float),
    "bgt.beta": ("beta", float),
    "bgt.sigma": ("sigma", float),
    "bgt.prior": ("prior", float),
    "bgt.exploration_pools": ("exploration_pools", int),
    "bgt.epsilon": ("epsilon", float),
    "bgt.min_subgroup": ("min_subgroup", int),
    "bgt.convergence_stop": ("convergence_stop", bool),
    "fault.kind": ("fault_kind", str),
    "fault.spike.rate": ("spike_rate", float),
    "fault.spike.amplitude_scale": ("spike_amplitude_scale", float),
    "fault.nonlinearity.range_fraction": ("nonlinearity_range_fraction", float),
    "fault.nonlinearity.slope": ("nonlinearity_slope", float),
    "fault.mean_drift.max_freq_hz": ("mean_drift_max_freq_hz", float),
    "fault.mean_drift.magnitude_scale": ("mean_drift_magnitude_scale", float),
    "fault.excessive_noise.variance_scale": ("excessive_noise_variance_scale", float),
    "model.state_dim": ("model_state_dim", int),
    "model.spectral_radius": ("model_spectral_radius", float),
    "model.process_noise": ("model_process_noise", float),
    "model.signal_variance": ("model_signal_variance", float),
    "model.meas_noise_fraction": ("model_meas_noise_fraction", float),
    "model.trace_length": ("model_trace_length", int),
    "model.sample_period": ("model_sample_period", float),
    "model.filter_state_dim": ("filter_state_dim", int),
    "kalman.threshold": ("kalman_threshold", float),
    "kalman.quantile": ("kalman_quantile", float),
    "kalman.calibration_samples": ("kalman_calibration_samples", int),
    "kalman.calibration_traces": ("kalman_calibration_traces", int),
    "kalman.burn_in_fraction": ("kalman_burn_in_fraction", float),
    "kalman.statistic": ("kalman_statistic", str),
    "kalman.joseph": ("kalman_joseph", bool),
    "kalman.pool_size": ("kalman_pool_size", int),
    "cgt.density": ("cgt_density", float),
    "cgt.decode_d": ("cgt_decode_d", int),
    "cgt.disjunct_required": ("cgt_disjunct_required", bool),
    "hwang.assumed_d": ("hwang_assumed_d", int),
    "hwang.classical_bisection": ("hwang_classical_bisection", bool),
    "loo.quantile": ("loo_quantile", float),
}


def parse_config_text(text: str) -> dict[str, str]:
    """Raw key -> value strings from config text; rejects unknown/duplicate keys."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = stripped.split("=", 1)
        key = key.strip()
        value = value.strip()
        if key not in KEY_FIELDS:
            raise ConfigurationError(f"line {lineno}: unknown config key {key!r}")
        if key in raw:
            raise ConfigurationError(f"line {lineno}: duplicate config key {key!r}")
        raw[key] = value
    return raw


def parse_overrides(items) -> dict:
    """Typed field overrides from KEY=VALUE strings using config-file keys."""
    out: dict = {}
    for item in items:
        if "=" not in item:
            raise ConfigurationError(f"override expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        if key not in KEY_FIELDS:
            raise ConfigurationError(f"unknown config key {key!r}")
        field_name, typ = KEY_FIELDS[key]
        try:
            out[field_name] = _parse_bool(value.strip()) if typ is bool else typ(value.strip())
        except ValueError as exc:
            raise ConfigurationError(f"config key {key!r}: {exc}") from None
    return out


def config_from_text(text: str, **overrides) -> ExperimentConfig:
    raw = parse_config_text(text)
    kwargs = {}
    for key, value in raw.items():
        field_name, typ = KEY_FIELDS[key]
        try:
            kwargs[field_name] = _parse_bool(value) if typ is bool else typ(value)
        except ValueError as exc:
            raise ConfigurationError(f"config key {key!r}: {exc}") from None
    kwargs.update(overrides)
    return ExperimentConfig(**kwargs)


def load_config(path, **overrides) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_text(fh.read(), **overrides)


def config_to_text(config: ExperimentConfig) -> str:
    """Render a config as a parseable key=value document (all keys)."""
    lines = []
    by_field = {f: k for k, (f, _) in KEY_FIELDS.items()}
    for f in fields(config):
        key = by_field[f.name]
        value = getattr(config, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"
