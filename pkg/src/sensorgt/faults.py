"""Sensor fault states and fault injection transforms.

Four fault families are supported: additive spikes, saturating
nonlinearity, low-frequency mean drift, and excessive zero-mean noise.
Injection touches only the flagged sensor columns; all other columns are
returned bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lds import SensorTrace

KINDS = ("spike", "nonlinearity", "mean_drift", "excessive_noise")

# Default parameters; *_scale values multiply the clean column's sample
# variance at injection time.
DEFAULTS = {
    "spike": {"rate": 0.05, "amplitude_scale": 1.0},
    "nonlinearity": {"range_fraction": 0.8, "slope": 0.3},
    "mean_drift": {"max_freq_hz": 5.0, "magnitude_scale": 0.5},
    "excessive_noise": {"variance_scale": 0.5},
}

_NUM_DRIFT_COMPONENTS = 8


@dataclass(frozen=True)
class FaultState:
    """0/1 flags, one per sensor; 1 marks a faulty sensor."""

    flags: np.ndarray

    def __post_init__(self):
        flags = np.asarray(self.flags, dtype=np.uint8)
        if flags.ndim != 1:
            raise ValueError("flags must be a 1-D vector")
        if not np.isin(flags, (0, 1)).all():
            raise ValueError("flags must contain only 0 and 1")
        flags.setflags(write=False)
        object.__setattr__(self, "flags", flags)

    @property
    def num_sensors(self) -> int:
        return self.flags.shape[0]

    @property
    def num_faulty(self) -> int:
        return int(self.flags.sum())

    def support(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.flags))

    def __eq__(self, other) -> bool:
        if not isinstance(other, FaultState):
            return NotImplemented
        return np.array_equal(self.flags, other.flags)

    def __hash__(self):
        return hash(self.flags.tobytes())


def fault_state_from_support(num_sensors: int, support) -> FaultState:
    flags = np.zeros(num_sensors, dtype=np.uint8)
    for i in support:
        flags[i] = 1
    return FaultState(flags)


@dataclass(frozen=True)
class Spike:
    """Random impulsive offsets on a fraction of samples.

    Each sample is independently hit with probability ``rate``; a hit adds
    sign * mean_amplitude * (1 + 0.2 u) with u uniform on [-1, 1] and the
    sign equally likely positive or negative.
    """

    rate: float
    mean_amplitude: float

    def __post_init__(self):
        if not (0.0 < self.rate < 1.0):
            raise ValueError("rate must lie in (0, 1)")
        if not (self.mean_amplitude > 0):
            raise ValueError("mean_amplitude must be positive")

    kind = "spike"


@dataclass(frozen=True)
class Nonlinearity:
    """Soft saturation: values beyond a threshold grow with reduced slope.

    The threshold is range_fraction times the clean column's max absolute
    value; beyond it the response is sign(y) * (theta + slope * (|y| - theta)).
    """

    range_fraction: float
    slope: float

    def __post_init__(self):
        if not (0.0 < self.range_fraction < 1.0):
            raise ValueError("range_fraction must lie in (0, 1)")
        if self.slope < 0:
            raise ValueError("slope must be nonnegative")

    kind = "nonlinearity"


@dataclass(frozen=True)
class MeanDrift:
    """Additive sum of low-frequency sinusoids rescaled to a target level.

    Eight sinusoids with frequencies uniform on (0, max_freq_hz] and random
    phases are summed and rescaled so the drift's sample standard deviation
    equals ``magnitude``.
    """

    max_freq_hz: float
    magnitude: float

    def __post_init__(self):
        if not (self.max_freq_hz > 0):
            raise ValueError("max_freq_hz must be positive")
        if not (self.magnitude > 0):
            raise ValueError("magnitude must be positive")

    kind = "mean_drift"


@dataclass(frozen=True)
class ExcessiveNoise:
    """Additive zero-mean Gaussian noise with the given variance."""

    noise_variance: float

    def __post_init__(self):
        if not (self.noise_variance > 0):
            raise ValueError("noise_variance must be positive")

    kind = "excessive_noise"


FaultSpec = Spike | Nonlinearity | MeanDrift | ExcessiveNoise


def sample_fault_state(num_sensors: int, d_max: int, seed: int) -> FaultState:
    """Draw a fault state with support size uniform on {0, ..., d_max}.

    The support itself is uniform over subsets of the chosen size.
    """
    if d_max < 0 or d_max > num_sensors:
        raise ValueError("d_max must lie in [0, num_sensors]")
    rng = np.random.default_rng(seed)
    size = int(rng.integers(0, d_max + 1))
    support = rng.choice(num_sensors, size=size, replace=False)
    return fault_state_from_support(num_sensors, support)


def exact_fault_state(num_sensors: int, num_faulty: int, seed: int) -> FaultState:
    """Draw a fault state with exactly num_faulty faulty sensors."""
    if num_faulty < 0 or num_faulty > num_sensors:
        raise ValueError("num_faulty must lie in [0, num_sensors]")
    rng = np.random.default_rng(seed)
    support = rng.choice(num_sensors, size=num_faulty, replace=False)
    return fault_state_from_support(num_sensors, support)


def _inject_column(y: np.ndarray, spec: FaultSpec, rng: np.random.Generator, sample_period: float) -> np.ndarray:
    t = y.shape[0]
    if isinstance(spec, Spike):
        hits = rng.random(t) < spec.rate
        n_hits = int(hits.sum())
        amp = spec.mean_amplitude * (1.0 + 0.2 * rng.uniform(-1.0, 1.0, size=n_hits))
        sign = rng.choice((-1.0, 1.0), size=n_hits)
        out = y.copy()
        out[hits] += sign * amp
        return out
    if isinstance(spec, Nonlinearity):
        theta = spec.range_fraction * np.max(np.abs(y))
        out = y.copy()
        over = np.abs(y) > theta
        out[over] = np.sign(y[over]) * (theta + spec.slope * (np.abs(y[over]) - theta))
        return out
    if isinstance(spec, MeanDrift):
        nyquist = 0.5 / sample_period
        if spec.max_freq_hz >= nyquist:
            raise ValueError(f"max_freq_hz {spec.max_freq_hz} must be below the Nyquist rate {nyquist}")
        freqs = rng.uniform(0.0, spec.max_freq_hz, size=_NUM_DRIFT_COMPONENTS)
        freqs = np.where(freqs == 0.0, spec.max_freq_hz, freqs)  # keep the (0, max] interval open at 0
        phases = rng.uniform(0.0, 2.0 * np.pi, size=_NUM_DRIFT_COMPONENTS)
        times = np.arange(t) * sample_period
        drift = np.sin(2.0 * np.pi * np.outer(times, freqs) + phases).sum(axis=1)
        sd = drift.std()
        if sd == 0.0:
            raise ValueError("degenerate drift signal; increase trace length")
        return y + drift * (spec.magnitude / sd)
    if isinstance(spec, ExcessiveNoise):
        return y + rng.standard_normal(t) * np.sqrt(spec.noise_variance)
    raise TypeError(f"unknown fault spec {spec!r}")


def inject(trace: SensorTrace, state: FaultState, spec: FaultSpec, seed: int) -> SensorTrace:
    """Apply ``spec`` to every flagged sensor column of the trace.

    Columns are processed in increasing sensor order with a fresh RNG
    substream per column; non-flagged columns are returned bit-identical.
    """
    if state.num_sensors != trace.num_sensors:
        raise ValueError("fault state and trace disagree on sensor count")
    samples = trace.samples.copy()
    root = np.random.default_rng(seed)
    for j in state.support():
        rng = np.random.default_rng(root.integers(0, 2**63))
        samples[:, j] = _inject_column(samples[:, j], spec, rng, trace.sample_period)
    return SensorTrace(samples, trace.sample_period)


def default_spec(kind: str, output_variance: float, overrides: dict | None = None) -> FaultSpec:
    """Build the default spec of the given kind scaled to a column variance."""
    if kind not in KINDS:
        raise ValueError(f"unknown fault kind {kind!r}")
    params = dict(DEFAULTS[kind])
    if overrides:
        unknown = set(overrides) - set(params)
        if unknown:
            raise ValueError(f"unknown parameters for {kind}: {sorted(unknown)}")
        params.update(overrides)
    if kind == "spike":
        return Spike(rate=params["rate"], mean_amplitude=params["amplitude_scale"] * output_variance)
    if kind == "nonlinearity":
        return Nonlinearity(range_fraction=params["range_fraction"], slope=params["slope"])
    if kind == "mean_drift":
        return MeanDrift(max_freq_hz=params["max_freq_hz"], magnitude=params["magnitude_scale"] * output_variance)
    return ExcessiveNoise(noise_variance=params["variance_scale"] * output_variance)


def inject_scaled(
    trace: SensorTrace,
    state: FaultState,
    kind: str,
    seed: int,
    overrides: dict | None = None,
) -> SensorTrace:
    """Inject the default fault of ``kind`` scaled per faulty column.

    Amplitude-like parameters are resolved against each flagged column's own
    clean sample variance, so sensors with different signal levels receive
    proportionate faults.
    """
    if state.num_sensors != trace.num_sensors:
        raise ValueError("fault state and trace disagree on sensor count")
    samples = trace.samples.copy()
    root = np.random.default_rng(seed)
    for j in state.support():
        rng = np.random.default_rng(root.integers(0, 2**63))
        var_j = float(trace.samples[:, j].var())
        spec = default_spec(kind, var_j, overrides)
        samples[:, j] = _inject_column(samples[:, j], spec, rng, trace.sample_period)
    return SensorTrace(samples, trace.sample_period)
