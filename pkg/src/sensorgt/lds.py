"""Discrete-time linear dynamical system models and simulation.

The system is

    x[k+1] = A x[k] + B u[k] + g[k]        g[k] ~ N(0, process_noise_cov)
    y[k]   = C x[k] + v[k]                 v[k] ~ N(0, meas_noise_cov)

with one output row per sensor.  Models are immutable; all randomness is
driven by explicit integer seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigurationError

_SYM_TOL = 1e-10
_PSD_TOL = -1e-10


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def _check_covariance(m: np.ndarray, name: str) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if not np.allclose(m, m.T, atol=_SYM_TOL, rtol=0.0):
        raise ValueError(f"{name} must be symmetric within {_SYM_TOL}")
    eigs = np.linalg.eigvalsh(0.5 * (m + m.T))
    if eigs.min() < _PSD_TOL:
        raise ValueError(f"{name} must be positive semidefinite, min eigenvalue {eigs.min()}")


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Immutable state-space model with per-sensor output rows.

    Parameters
    ----------
    A : (q, q) state transition matrix.
    C : (N, q) observation matrix, one row per sensor.
    process_noise_cov : (q, q) PSD covariance of the process noise.
    meas_noise_cov : (N, N) PSD covariance of the measurement noise.
    B : (q, p) input matrix, or None when the system has no exogenous input.
    """

    A: np.ndarray
    C: np.ndarray
    process_noise_cov: np.ndarray
    meas_noise_cov: np.ndarray
    B: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A))
        object.__setattr__(self, "C", _frozen(self.C))
        object.__setattr__(self, "process_noise_cov", _frozen(self.process_noise_cov))
        object.__setattr__(self, "meas_noise_cov", _frozen(self.meas_noise_cov))
        if self.B is not None:
            object.__setattr__(self, "B", _frozen(self.B))
        q = self.A.shape[0]
        if self.A.ndim != 2 or self.A.shape != (q, q):
            raise ValueError(f"A must be square, got shape {self.A.shape}")
        if self.C.ndim != 2 or self.C.shape[1] != q:
            raise ValueError(f"C must have {q} columns, got shape {self.C.shape}")
        if self.C.shape[0] < 1:
            raise ValueError("model needs at least one sensor row in C")
        _check_covariance(self.process_noise_cov, "process_noise_cov")
        _check_covariance(self.meas_noise_cov, "meas_noise_cov")
        if self.process_noise_cov.shape[0] != q:
            raise ValueError("process_noise_cov must be q x q")
        if self.meas_noise_cov.shape[0] != self.C.shape[0]:
            raise ValueError("meas_noise_cov must be N x N")
        if self.B is not None and (self.B.ndim != 2 or self.B.shape[0] != q):
            raise ValueError(f"B must have {q} rows, got shape {self.B.shape}")

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def num_sensors(self) -> int:
        return self.C.shape[0]

    @property
    def num_inputs(self) -> int:
        return 0 if self.B is None else self.B.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, StateSpaceModel):
            return NotImplemented
        if (self.B is None) != (other.B is None):
            return False
        same = (
            np.array_equal(self.A, other.A)
            and np.array_equal(self.C, other.C)
            and np.array_equal(self.process_noise_cov, other.process_noise_cov)
            and np.array_equal(self.meas_noise_cov, other.meas_noise_cov)
        )
        if self.B is not None:
            same = same and np.array_equal(self.B, other.B)
        return same


@dataclass(frozen=True)
class StateTrajectory:
    """Latent state sequence; states[k] is the state producing output k."""

    states: np.ndarray  # (T, q)

    def __post_init__(self):
        object.__setattr__(self, "states", _frozen(self.states))
        if self.states.ndim != 2:
            raise ValueError("states must be a (T, q) array")

    @property
    def num_steps(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class SensorTrace:
    """Observed sensor outputs, one column per sensor."""

    samples: np.ndarray  # (T, N)
    sample_period: float = 0.005

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(self.samples))
        if self.samples.ndim != 2:
            raise ValueError("samples must be a (T, N) array")
        if not (self.sample_period > 0):
            raise ValueError("sample_period must be positive")

    @property
    def num_steps(self) -> int:
        return self.samples.shape[0]

    @property
    def num_sensors(self) -> int:
        return self.samples.shape[1]


def _noise_factor(cov: np.ndarray) -> np.ndarray:
    """Factor L with L @ L.T == cov, valid for any PSD covariance."""
    if not cov.any():
        return np.zeros_like(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        w = np.clip(w, 0.0, None)
        return v * np.sqrt(w)


def generate_random_stable_model(
    state_dim: int,
    num_sensors: int,
    spectral_radius: float,
    noise_scales: tuple[float, float],
    seed: int,
    num_inputs: int = 0,
) -> StateSpaceModel:
    """Draw a random stable model with diagonal noise covariances.

    A is standard normal rescaled so its spectral radius equals
    ``spectral_radius`` exactly (up to floating point); C is standard normal
    and has full rank min(N, q).  noise_scales gives the diagonal values of
    the process and measurement covariances (zero is allowed).

    Parameters
    ----------
    state_dim : q >= 1.
    num_sensors : N >= 2.
    spectral_radius : target in the open interval (0, 1).
    noise_scales : (process_scale, meas_scale), both nonnegative.
    seed : RNG seed.
    num_inputs : columns of B; 0 means no B.
    """
    if state_dim < 1:
        raise ValueError("state_dim must be >= 1")
    if num_sensors < 2:
        raise ValueError("num_sensors must be >= 2")
    if not (0.0 < spectral_radius < 1.0):
        raise ValueError("spectral_radius must lie strictly inside (0, 1)")
    proc_scale, meas_scale = noise_scales
    if proc_scale < 0 or meas_scale < 0:
        raise ValueError("noise_scales must be nonnegative")

    rng = np.random.default_rng(seed)
    a_raw = rng.standard_normal((state_dim, state_dim))
    radius = max(abs(np.linalg.eigvals(a_raw)))
    while radius == 0.0:  # probability zero, but keep the rescale well defined
        a_raw = rng.standard_normal((state_dim, state_dim))
        radius = max(abs(np.linalg.eigvals(a_raw)))
    A = a_raw * (spectral_radius / radius)

    C = rng.standard_normal((num_sensors, state_dim))
    while np.linalg.matrix_rank(C) < min(num_sensors, state_dim):
        C = rng.standard_normal((num_sensors, state_dim))

    B = rng.standard_normal((state_dim, num_inputs)) if num_inputs > 0 else None
    return StateSpaceModel(
        A=A,
        C=C,
        process_noise_cov=proc_scale * np.eye(state_dim),
        meas_noise_cov=meas_scale * np.eye(num_sensors),
        B=B,
    )


def simulate(
    model: StateSpaceModel,
    num_steps: int,
    input_mode: str = "none",
    input_variance: float = 1.0,
    seed: int = 0,
    sample_period: float = 0.005,
    *,
    process_noise_override: np.ndarray | None = None,
) -> tuple[StateTrajectory, SensorTrace]:
    """Simulate the model from x[0] = 0 for num_steps outputs.

    input_mode is "none" or "gaussian"; "gaussian" draws u[k] ~ N(0,
    input_variance * I) and requires the model to have a B matrix.
    process_noise_override, if given, replaces the drawn process noise with a
    fixed (T, q) sequence; it exists so tests can pin deterministic
    recursions.
    """
    if num_steps < 1:
        raise ValueError("num_steps must be >= 1")
    if input_mode not in ("none", "gaussian"):
        raise ValueError(f"unknown input_mode {input_mode!r}")
    if input_mode == "gaussian" and model.B is None:
        raise ConfigurationError("input_mode=gaussian requires a model with a B matrix")

    rng = np.random.default_rng(seed)
    q, n = model.state_dim, model.num_sensors

    lg = _noise_factor(model.process_noise_cov)
    lv = _noise_factor(model.meas_noise_cov)
    g = rng.standard_normal((num_steps, q)) @ lg.T
    v = rng.standard_normal((num_steps, n)) @ lv.T
    if process_noise_override is not None:
        g = np.asarray(process_noise_override, dtype=float)
        if g.shape != (num_steps, q):
            raise ValueError("process_noise_override must have shape (num_steps, q)")
    u = None
    if input_mode == "gaussian":
        u = rng.standard_normal((num_steps, model.num_inputs)) * np.sqrt(input_variance)

    states = np.zeros((num_steps, q))
    samples = np.zeros((num_steps, n))
    x = np.zeros(q)
    for k in range(num_steps):
        states[k] = x
        samples[k] = model.C @ x + v[k]
        x = model.A @ x + g[k]
        if u is not None:
            x = x + model.B @ u[k]
    return StateTrajectory(states), SensorTrace(samples, sample_period)


def restrict_observation(model: StateSpaceModel, sensor_subset) -> StateSpaceModel:
    """Model observed only through the given sensors, in the given order."""
    subset = list(sensor_subset)
    if len(subset) == 0:
        raise ValueError("sensor_subset must be non-empty")
    if len(set(subset)) != len(subset):
        raise ValueError("sensor_subset must contain distinct indices")
    for i in subset:
        if not (0 <= i < model.num_sensors):
            raise ValueError(f"sensor index {i} out of range [0, {model.num_sensors})")
    idx = np.asarray(subset, dtype=int)
    return StateSpaceModel(
        A=model.A,
        C=model.C[idx, :],
        process_noise_cov=model.process_noise_cov,
        meas_noise_cov=model.meas_noise_cov[np.ix_(idx, idx)],
        B=model.B,
    )


def stationary_state_cov(model: StateSpaceModel) -> np.ndarray:
    """Solve P = A P A' + process_noise_cov for the stationary state covariance."""
    return scipy.linalg.solve_discrete_lyapunov(model.A, model.process_noise_cov)


def stationary_output_variances(model: StateSpaceModel) -> np.ndarray:
    """Per-sensor stationary output variances diag(C P C' + meas_noise_cov)."""
    p = stationary_state_cov(model)
    return np.diag(model.C @ p @ model.C.T + model.meas_noise_cov).copy()


def normalize_output_variance(model: StateSpaceModel, target_signal_variance: float) -> StateSpaceModel:
    """Rescale each row of C so every sensor's stationary signal variance
    hits the target, as if channel gains were calibrated to a common level.

    Only the noise-free part of the output (C P C') is rescaled; the
    measurement noise covariance is left untouched.
    """
    if target_signal_variance <= 0:
        raise ValueError("target_signal_variance must be positive")
    p = stationary_state_cov(model)
    current = np.einsum("ij,jk,ik->i", model.C, p, model.C)
    if np.any(current <= 0):
        raise ValueError("model has a sensor with no stationary output signal to normalize")
    gamma = np.sqrt(target_signal_variance / current)
    return StateSpaceModel(
        A=model.A,
        C=model.C * gamma[:, None],
        process_noise_cov=model.process_noise_cov,
        meas_noise_cov=model.meas_noise_cov,
        B=model.B,
    )


def reduce_model_order(model: StateSpaceModel, reduced_dim: int) -> StateSpaceModel:
    """Balanced-truncation approximation of the model with a smaller state.

    Gramians are taken with respect to the process noise input and the full
    observation map.  Used to study detector robustness when the filter runs
    on a lower-order model than the true system.
    """
    q = model.state_dim
    if not (1 <= reduced_dim <= q):
        raise ValueError(f"reduced_dim must be in [1, {q}]")
    if reduced_dim == q:
        return model
    wc = scipy.linalg.solve_discrete_lyapunov(model.A, model.process_noise_cov + 1e-12 * np.eye(q))
    wo = scipy.linalg.solve_discrete_lyapunov(model.A.T, model.C.T @ model.C)
    lc = np.linalg.cholesky(0.5 * (wc + wc.T) + 1e-12 * np.eye(q))
    lo = np.linalg.cholesky(0.5 * (wo + wo.T) + 1e-12 * np.eye(q))
    u, s, vt = np.linalg.svd(lo.T @ lc)
    r = reduced_dim
    s_r = np.sqrt(s[:r])
    t_inv = (lc @ vt[:r].T) / s_r  # maps reduced -> full coordinates
    t = (u[:, :r] * (1.0 / s_r)).T @ lo.T  # maps full -> reduced
    a_r = t @ model.A @ t_inv
    c_r = model.C @ t_inv
    q_r = t @ model.process_noise_cov @ t.T
    q_r = 0.5 * (q_r + q_r.T)
    b_r = t @ model.B if model.B is not None else None
    return StateSpaceModel(
        A=a_r,
        C=c_r,
        process_noise_cov=q_r,
        meas_noise_cov=model.meas_noise_cov,
        B=b_r,
    )


# --- serialization ---------------------------------------------------------
# Structured text with every float written to 17 significant digits so that
# load(save(model)) is value-exact.


def _fmt(x: float) -> str:
    return format(float(x), ".16e")


def _matrix_lines(m: np.ndarray) -> list[str]:
    return [" ".join(_fmt(x) for x in row) for row in np.atleast_2d(m)]


def save_model(model: StateSpaceModel, path) -> None:
    doc = {
        "q": model.state_dim,
        "N": model.num_sensors,
        "p": model.num_inputs,
        "A": _matrix_lines(model.A),
        "C": _matrix_lines(model.C),
        "process_noise_cov": _matrix_lines(model.process_noise_cov),
        "meas_noise_cov": _matrix_lines(model.meas_noise_cov),
    }
    if model.B is not None:
        doc["B"] = _matrix_lines(model.B)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _parse_matrix(lines: list[str], rows: int, cols: int, name: str) -> np.ndarray:
    m = np.array([[float(x) for x in line.split()] for line in lines])
    if m.shape != (rows, cols):
        raise ValueError(f"{name} has shape {m.shape}, expected {(rows, cols)}")
    return m


def load_model(path) -> StateSpaceModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    q, n, p = int(doc["q"]), int(doc["N"]), int(doc["p"])
    b = _parse_matrix(doc["B"], q, p, "B") if p > 0 else None
    return StateSpaceModel(
        A=_parse_matrix(doc["A"], q, q, "A"),
        C=_parse_matrix(doc["C"], n, q, "C"),
        process_noise_cov=_parse_matrix(doc["process_noise_cov"], q, q, "process_noise_cov"),
        meas_noise_cov=_parse_matrix(doc["meas_noise_cov"], n, n, "meas_noise_cov"),
        B=b,
    )


def save_trace(trace: SensorTrace, path) -> None:
    # write through a handle so np.savez cannot append .npz to the path
    with open(path, "wb") as fh:
        np.savez(fh, samples=trace.samples, sample_period=np.array(trace.sample_period))


def load_trace(path) -> SensorTrace:
    with np.load(path) as data:
        return SensorTrace(data["samples"], float(data["sample_period"]))
