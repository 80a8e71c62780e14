import numpy as np
import pytest

from stpool.baselines import (
    LstmBaselineParams,
    cv_filter,
    cv_fit_predict,
    lstm_baseline_predict,
)
from stpool.errors import DataError
from stpool.representation import build_point_set, to_reference_frame

from conftest import make_scene


class TestKalmanCv:
    def test_exact_on_noiseless_constant_velocity(self):
        times = 0.5 * np.arange(7)
        positions = np.outer(times, [1.0, 0.0])
        traj = cv_fit_predict(times, positions, t_f=3, dt=0.5)
        expected = positions[-1] + np.outer([0.5, 1.0, 1.5], [1.0, 0.0])
        assert np.max(np.abs(traj.positions - expected)) <= 1e-6

    def test_stationary_history_predicts_in_place(self):
        times = 0.5 * np.arange(5)
        positions = np.tile([3.0, -2.0], (5, 1))
        traj = cv_fit_predict(times, positions, t_f=4, dt=0.5)
        assert np.max(np.abs(traj.positions - [3.0, -2.0])) <= 1e-9

    def test_single_observation_predicts_stationary(self):
        traj = cv_fit_predict(np.array([0.0]), np.array([[1.0, 2.0]]), t_f=2, dt=0.5)
        np.testing.assert_allclose(traj.positions, [[1.0, 2.0], [1.0, 2.0]])

    def test_gap_aware_deltas(self):
        # Missing middle frames; velocity still identifiable.
        times = np.array([0.0, 0.5, 2.0, 2.5])
        positions = np.outer(times, [2.0, 1.0])
        traj = cv_fit_predict(times, positions, t_f=2, dt=0.5)
        expected = positions[-1] + np.outer([0.5, 1.0], [2.0, 1.0])
        assert np.max(np.abs(traj.positions - expected)) <= 1e-6

    def test_velocity_estimate_within_3_sigma_monte_carlo(self):
        # Noisy constant-velocity tracks: the filter's own covariance should
        # cover the truth at the advertised rate.
        v_true = np.array([3.0, -1.0])
        sigma = 0.1
        hits = 0
        trials = 200
        rng = np.random.default_rng(2024)
        for _ in range(trials):
            times = 0.25 * np.arange(20)
            clean = np.outer(times, v_true)
            noisy = clean + rng.normal(0.0, sigma, clean.shape)
            state, _ = cv_filter(times, noisy, process_noise=0.1, obs_noise=sigma)
            bound = 3.0 * np.sqrt(np.diag(state.covariance)[2:])
            if np.all(np.abs(state.state[2:] - v_true) <= bound):
                hits += 1
        assert hits / trials >= 0.97

    def test_covariance_stays_symmetric_psd(self):
        rng = np.random.default_rng(7)
        times = 0.5 * np.arange(15)
        positions = np.outer(times, [2.0, 0.5]) + rng.normal(0, 0.3, (15, 2))
        _, trace = cv_filter(times, positions, process_noise=0.2, obs_noise=0.3)
        for cov in trace:
            np.testing.assert_allclose(cov, cov.T, atol=1e-12)
            assert np.min(np.linalg.eigvalsh(cov)) >= -1e-9

    def test_empty_track_rejected(self):
        with pytest.raises(DataError):
            cv_fit_predict(np.array([]), np.zeros((0, 2)), t_f=2, dt=0.5)


class TestLstmBaseline:
    def test_zero_weights_stay_at_origin(self, rng):
        params = LstmBaselineParams.init(rng, hidden=8)
        for t in (
            params.decoder.init_projection.weight,
            params.decoder.init_projection.bias,
            params.decoder.cell.w_x,
            params.decoder.cell.w_h,
            params.decoder.cell.bias,
            params.decoder.output_head.weight,
            params.decoder.output_head.bias,
        ):
            t.data[...] = 0.0
        times = 0.5 * np.arange(7) - 3.0
        positions = np.outer(times, [1.0, 0.0])
        traj = lstm_baseline_predict(times, positions, params, t_f=4)
        np.testing.assert_array_equal(traj.positions, np.zeros((4, 2)))

    def test_output_length(self, rng):
        params = LstmBaselineParams.init(rng, hidden=8)
        times = 0.5 * np.arange(7)
        traj = lstm_baseline_predict(times, np.outer(times, [1.0, 1.0]), params, t_f=6)
        assert len(traj) == 6

    def test_gapped_history_rejected_while_point_set_succeeds(self, rng):
        params = LstmBaselineParams.init(rng, hidden=8)
        # One frame missing mid-history: non-uniform sampling.
        times = np.array([-3.0, -2.5, -1.5, -1.0, -0.5, 0.0])
        positions = np.outer(times, [2.0, 0.0])
        with pytest.raises(DataError):
            lstm_baseline_predict(times, positions, params, t_f=3)
        # The set representation consumes the same gapped history fine.
        scene = make_scene(
            positions,
            target_times=times,
            future_positions=np.outer([0.5, 1.0], [2.0, 0.0]),
            future_times=[0.5, 1.0],
        )
        ps = build_point_set(to_reference_frame(scene))
        assert len(ps) == 6

    def test_single_observation_rejected(self, rng):
        params = LstmBaselineParams.init(rng, hidden=8)
        with pytest.raises(DataError):
            lstm_baseline_predict(np.array([0.0]), np.array([[0.0, 0.0]]), params, t_f=3)
