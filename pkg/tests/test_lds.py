import numpy as np
import pytest

from sensorgt import lds
from sensorgt.errors import ConfigurationError


def scalar_model(a=0.5, c=1.0, q_var=0.0, r_var=0.0, b=None):
    return lds.StateSpaceModel(
        A=np.array([[a]]),
        C=np.array([[c], [c]]) if np.ndim(c) == 0 else np.asarray(c),
        process_noise_cov=np.array([[q_var]]),
        meas_noise_cov=r_var * np.eye(2),
        B=b,
    )


class TestStateSpaceModel:
    def test_dimension_properties(self):
        m = lds.generate_random_stable_model(4, 3, 0.9, (0.1, 0.2), seed=1)
        assert m.state_dim == 4
        assert m.num_sensors == 3
        assert m.num_inputs == 0

    def test_rejects_nonsquare_a(self):
        with pytest.raises(ValueError, match="square"):
            lds.StateSpaceModel(
                A=np.zeros((2, 3)),
                C=np.zeros((2, 2)),
                process_noise_cov=np.eye(2),
                meas_noise_cov=np.eye(2),
            )

    def test_rejects_mismatched_c(self):
        with pytest.raises(ValueError, match="columns"):
            lds.StateSpaceModel(
                A=np.eye(2),
                C=np.zeros((3, 4)),
                process_noise_cov=np.eye(2),
                meas_noise_cov=np.eye(3),
            )

    def test_rejects_asymmetric_covariance(self):
        q = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ValueError, match="symmetric"):
            lds.StateSpaceModel(
                A=np.eye(2), C=np.eye(2), process_noise_cov=q, meas_noise_cov=np.eye(2)
            )

    def test_rejects_indefinite_covariance(self):
        q = np.array([[1.0, 0.0], [0.0, -0.5]])
        with pytest.raises(ValueError, match="semidefinite"):
            lds.StateSpaceModel(
                A=np.eye(2), C=np.eye(2), process_noise_cov=q, meas_noise_cov=np.eye(2)
            )

    def test_equality_is_exact(self):
        m1 = lds.generate_random_stable_model(3, 2, 0.9, (0.1, 0.1), seed=2)
        m2 = lds.generate_random_stable_model(3, 2, 0.9, (0.1, 0.1), seed=2)
        m3 = lds.generate_random_stable_model(3, 2, 0.9, (0.1, 0.1), seed=3)
        assert m1 == m2
        assert m1 != m3


class TestGenerateRandomStableModel:
    def test_spectral_radius_hits_target(self):
        m = lds.generate_random_stable_model(20, 18, 0.95, (1e-3, 0.0), seed=7)
        radius = max(abs(np.linalg.eigvals(m.A)))
        assert abs(radius - 0.95) < 1e-12

    def test_c_has_full_row_rank(self):
        m = lds.generate_random_stable_model(20, 18, 0.95, (1e-3, 0.0), seed=7)
        assert np.linalg.matrix_rank(m.C) == 18

    def test_diagonal_noise_covariances(self):
        m = lds.generate_random_stable_model(6, 4, 0.8, (0.3, 0.7), seed=5)
        assert np.allclose(m.process_noise_cov, 0.3 * np.eye(6))
        assert np.allclose(m.meas_noise_cov, 0.7 * np.eye(4))

    def test_seed_reproducible(self):
        a = lds.generate_random_stable_model(5, 3, 0.9, (0.1, 0.1), seed=11)
        b = lds.generate_random_stable_model(5, 3, 0.9, (0.1, 0.1), seed=11)
        assert a == b

    def test_optional_input_matrix(self):
        m = lds.generate_random_stable_model(5, 3, 0.9, (0.1, 0.1), seed=1, num_inputs=2)
        assert m.B.shape == (5, 2)
        assert m.num_inputs == 2

    def test_rejects_bad_radius(self):
        with pytest.raises(ValueError):
            lds.generate_random_stable_model(5, 3, 1.0, (0.1, 0.1), seed=1)
        with pytest.raises(ValueError):
            lds.generate_random_stable_model(5, 3, 0.0, (0.1, 0.1), seed=1)


class TestSimulate:
    def test_closed_form_recursion(self):
        # x[k+1] = 0.5 x[k] + 1 gives 0, 1, 1.5, 1.75 from x[0]=0
        m = scalar_model()
        override = np.ones((4, 1))
        traj, trace = lds.simulate(m, 4, seed=0, process_noise_override=override)
        assert np.allclose(traj.states[:, 0], [0.0, 1.0, 1.5, 1.75])
        # noise-free sensors read C x exactly
        assert np.allclose(trace.samples, traj.states @ m.C.T)

    def test_states_precede_transition(self):
        # samples[k] must come from states[k], not the advanced state
        m = scalar_model(r_var=0.0)
        override = np.ones((3, 1))
        traj, trace = lds.simulate(m, 3, seed=0, process_noise_override=override)
        assert trace.samples[0, 0] == 0.0

    def test_seed_determinism(self):
        m = lds.generate_random_stable_model(4, 3, 0.9, (0.2, 0.1), seed=3)
        t1 = lds.simulate(m, 50, seed=9)[1]
        t2 = lds.simulate(m, 50, seed=9)[1]
        t3 = lds.simulate(m, 50, seed=10)[1]
        assert np.array_equal(t1.samples, t2.samples)
        assert not np.array_equal(t1.samples, t3.samples)

    def test_gaussian_input_requires_b(self):
        m = lds.generate_random_stable_model(4, 3, 0.9, (0.2, 0.1), seed=3)
        with pytest.raises(ConfigurationError):
            lds.simulate(m, 10, input_mode="gaussian")

    def test_gaussian_input_excites_deterministic_system(self):
        m = lds.generate_random_stable_model(4, 3, 0.9, (0.0, 0.0), seed=3, num_inputs=2)
        _, trace = lds.simulate(m, 50, input_mode="gaussian", input_variance=2.0, seed=4)
        assert np.abs(trace.samples[1:]).max() > 0.0

    def test_sample_period_carried(self):
        m = scalar_model()
        _, trace = lds.simulate(m, 3, seed=0, sample_period=0.02)
        assert trace.sample_period == 0.02

    def test_stationary_variance_matches_theory(self):
        m = lds.generate_random_stable_model(6, 5, 0.9, (0.5, 0.3), seed=21)
        _, trace = lds.simulate(m, 60000, seed=22)
        empirical = trace.samples[500:].var(axis=0)
        theory = lds.stationary_output_variances(m)
        ratio = empirical.mean() / theory.mean()
        assert abs(ratio - 1.0) < 0.05


class TestRestrictObservation:
    def test_subset_order_preserved(self):
        m = lds.generate_random_stable_model(5, 4, 0.9, (0.1, 0.0), seed=6)
        base = lds.StateSpaceModel(
            A=m.A,
            C=m.C,
            process_noise_cov=m.process_noise_cov,
            meas_noise_cov=np.diag([1.0, 2.0, 3.0, 4.0]),
        )
        sub = lds.restrict_observation(base, [3, 1])
        assert np.array_equal(sub.C, base.C[[3, 1], :])
        assert np.array_equal(np.diag(sub.meas_noise_cov), [4.0, 2.0])

    def test_rejects_duplicates_and_empty(self):
        m = lds.generate_random_stable_model(5, 4, 0.9, (0.1, 0.1), seed=6)
        with pytest.raises(ValueError):
            lds.restrict_observation(m, [1, 1])
        with pytest.raises(ValueError):
            lds.restrict_observation(m, [])
        with pytest.raises(ValueError):
            lds.restrict_observation(m, [4])


class TestStationaryAndNormalize:
    def test_scalar_lyapunov_closed_form(self):
        # P = a^2 P + q  =>  P = q / (1 - a^2)
        m = scalar_model(a=0.5, q_var=0.75, r_var=0.25)
        p = lds.stationary_state_cov(m)
        assert abs(p[0, 0] - 1.0) < 1e-12
        v = lds.stationary_output_variances(m)
        assert np.allclose(v, 1.25)

    def test_normalize_hits_target_per_sensor(self):
        m = lds.generate_random_stable_model(8, 5, 0.9, (0.1, 0.2), seed=13)
        scaled = lds.normalize_output_variance(m, 36.0)
        p = lds.stationary_state_cov(scaled)
        signal = np.diag(scaled.C @ p @ scaled.C.T)
        assert np.allclose(signal, 36.0, atol=1e-9)
        # measurement noise untouched
        assert np.array_equal(scaled.meas_noise_cov, m.meas_noise_cov)

    def test_normalize_rejects_nonpositive_target(self):
        m = lds.generate_random_stable_model(4, 3, 0.9, (0.1, 0.1), seed=13)
        with pytest.raises(ValueError):
            lds.normalize_output_variance(m, 0.0)


class TestReduceModelOrder:
    def test_full_order_preserves_output_statistics(self):
        m = lds.generate_random_stable_model(8, 5, 0.9, (0.2, 0.1), seed=17)
        balanced = lds.reduce_model_order(m, 8)
        assert balanced.state_dim == 8
        v1 = lds.stationary_output_variances(m)
        v2 = lds.stationary_output_variances(balanced)
        assert np.allclose(v1, v2, rtol=1e-8)

    def test_truncation_keeps_stability_and_shape(self):
        m = lds.generate_random_stable_model(12, 6, 0.95, (0.2, 0.1), seed=18)
        r = lds.reduce_model_order(m, 7)
        assert r.state_dim == 7
        assert r.num_sensors == 6
        assert max(abs(np.linalg.eigvals(r.A))) < 1.0

    def test_truncation_approximates_output_variance(self):
        m = lds.generate_random_stable_model(12, 6, 0.9, (0.2, 0.1), seed=19)
        r = lds.reduce_model_order(m, 11)
        v1 = lds.stationary_output_variances(m)
        v2 = lds.stationary_output_variances(r)
        assert np.allclose(v1, v2, rtol=0.2)

    def test_rejects_bad_dimension(self):
        m = lds.generate_random_stable_model(5, 3, 0.9, (0.1, 0.1), seed=20)
        with pytest.raises(ValueError):
            lds.reduce_model_order(m, 0)
        with pytest.raises(ValueError):
            lds.reduce_model_order(m, 6)


class TestSerialization:
    def test_model_round_trip_exact(self, tmp_path):
        m = lds.generate_random_stable_model(7, 4, 0.93, (0.31, 0.07), seed=23, num_inputs=2)
        path = tmp_path / "model.json"
        lds.save_model(m, path)
        loaded = lds.load_model(path)
        assert loaded == m

    def test_model_without_b_round_trip(self, tmp_path):
        m = lds.generate_random_stable_model(3, 2, 0.5, (0.1, 0.1), seed=24)
        path = tmp_path / "model.json"
        lds.save_model(m, path)
        loaded = lds.load_model(path)
        assert loaded == m
        assert loaded.B is None

    def test_trace_round_trip_exact(self, tmp_path):
        m = lds.generate_random_stable_model(4, 3, 0.9, (0.2, 0.1), seed=25)
        _, trace = lds.simulate(m, 40, seed=26, sample_period=0.01)
        path = tmp_path / "trace.npz"
        lds.save_trace(trace, path)
        loaded = lds.load_trace(path)
        assert np.array_equal(loaded.samples, trace.samples)
        assert loaded.sample_period == trace.sample_period
