"""Reference predictors: constant-velocity Kalman filter and a target-only LSTM.

The Kalman baseline filters the target history under a constant-velocity
motion model and rolls the final state forward. The LSTM baseline encodes the
target's own history sequence and reuses the displacement decoder; it
deliberately rejects gapped histories, which the set encoder tolerates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .decoder import DecoderParams, rollout
from .errors import DataError
from .nn import LstmCellParams, lstm_cell_batch
from .representation import Trajectory, derive_velocity

_H_OBS = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])


@dataclass
class KalmanCVState:
    """Position/velocity state with covariance for one agent."""

    state: np.ndarray  # [4]: x1, x2, v1, v2
    covariance: np.ndarray  # [4, 4]
    process_noise: float  # accel-scale white noise, m/s^2
    obs_noise: float  # position noise, m


def _transition(dt: float) -> np.ndarray:
    f = np.eye(4)
    f[0, 2] = dt
    f[1, 3] = dt
    return f


def _process_cov(dt: float, q: float) -> np.ndarray:
    # White-noise acceleration model.
    q2 = q * q
    d2, d3, d4 = dt * dt, dt**3, dt**4
    out = np.zeros((4, 4))
    out[0, 0] = out[1, 1] = q2 * d4 / 4.0
    out[2, 2] = out[3, 3] = q2 * d2
    out[0, 2] = out[2, 0] = out[1, 3] = out[3, 1] = q2 * d3 / 2.0
    return out


def cv_predict(st: KalmanCVState, dt: float) -> KalmanCVState:
    f = _transition(dt)
    state = f @ st.state
    cov = f @ st.covariance @ f.T + _process_cov(dt, st.process_noise)
    cov = 0.5 * (cov + cov.T)
    return KalmanCVState(state, cov, st.process_noise, st.obs_noise)


def cv_update(st: KalmanCVState, z: np.ndarray) -> KalmanCVState:
    r = max(st.obs_noise * st.obs_noise, 1e-12) * np.eye(2)
    innovation = np.asarray(z, dtype=np.float64) - _H_OBS @ st.state
    s = _H_OBS @ st.covariance @ _H_OBS.T + r
    gain = st.covariance @ _H_OBS.T @ np.linalg.inv(s)
    state = st.state + gain @ innovation
    ikh = np.eye(4) - gain @ _H_OBS
    cov = ikh @ st.covariance @ ikh.T + gain @ r @ gain.T  # Joseph form
    cov = 0.5 * (cov + cov.T)
    return KalmanCVState(state, cov, st.process_noise, st.obs_noise)


def cv_filter(
    times: np.ndarray,
    positions: np.ndarray,
    process_noise: float = 0.1,
    obs_noise: float = 0.05,
) -> tuple[KalmanCVState, list[np.ndarray]]:
    """Run predict/update over a history track (gap-aware time deltas).

    Initializes position/velocity by two-point differencing from the first two
    observations; a single observation yields a stationary state. Returns the
    final state and the covariance after each update.
    """
    times = np.asarray(times, dtype=np.float64)
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    n = times.shape[0]
    if n == 0:
        raise DataError("Kalman baseline needs at least one observation")
    r = max(obs_noise * obs_noise, 1e-12)
    if n == 1:
        cov = np.diag([r, r, 100.0, 100.0])
        return KalmanCVState(np.array([*positions[0], 0.0, 0.0]), cov, process_noise, obs_noise), [cov]
    dt0 = times[1] - times[0]
    if dt0 <= 0:
        raise DataError("timestamps must strictly increase")
    v0 = (positions[1] - positions[0]) / dt0
    st = KalmanCVState(np.array([*positions[1], *v0]), _two_point_cov(r, dt0), process_noise, obs_noise)
    trace = [st.covariance.copy()]
    for i in range(2, n):
        dt = times[i] - times[i - 1]
        if dt <= 0:
            raise DataError("timestamps must strictly increase")
        st = cv_predict(st, dt)
        st = cv_update(st, positions[i])
        trace.append(st.covariance.copy())
    return st, trace


def _two_point_cov(r: float, dt: float) -> np.ndarray:
    cov = np.zeros((4, 4))
    for axis in (0, 1):
        cov[axis, axis] = r
        cov[axis + 2, axis + 2] = 2.0 * r / (dt * dt)
        cov[axis, axis + 2] = cov[axis + 2, axis] = r / dt
    return cov


def cv_fit_predict(
    times: np.ndarray,
    positions: np.ndarray,
    t_f: int,
    dt: float,
    process_noise: float = 0.1,
    obs_noise: float = 0.05,
) -> Trajectory:
    """Filter the history, then roll the final state forward T_f steps."""
    st, _ = cv_filter(times, positions, process_noise, obs_noise)
    out = np.empty((t_f, 2))
    for k in range(t_f):
        st = cv_predict(st, dt)
        out[k] = st.state[:2]
    return Trajectory(times=dt * np.arange(1, t_f + 1), positions=out)


@dataclass
class LstmBaselineParams:
    """Sequence encoder over the target's own (position, velocity) steps."""

    encoder_cell: LstmCellParams  # input width 4
    decoder: DecoderParams
    hidden: int

    @classmethod
    def init(cls, rng: np.random.Generator, hidden: int = 128) -> "LstmBaselineParams":
        return cls(
            encoder_cell=LstmCellParams.init(rng, 4, hidden),
            decoder=DecoderParams.init(rng, hidden=hidden),
            hidden=hidden,
        )


def _check_uniform(times: np.ndarray) -> None:
    deltas = np.diff(times)
    if deltas.size == 0:
        raise DataError("LSTM baseline needs at least two history observations")
    if np.any(np.abs(deltas - deltas[0]) > 1e-6):
        raise DataError(
            "LSTM baseline requires a complete, uniformly sampled history "
            "(gapped track rejected)"
        )


def lstm_baseline_encode_batch(
    tracks: list[tuple[np.ndarray, np.ndarray]], params: LstmBaselineParams
) -> Tensor:
    """Encode equal-length (times, positions) target histories -> [B, H]."""
    feats = []
    length = None
    for times, positions in tracks:
        _check_uniform(times)
        if length is None:
            length = times.shape[0]
        elif times.shape[0] != length:
            raise DataError("LSTM baseline batch requires equal-length histories")
        vel = derive_velocity(times, positions)
        feats.append(np.concatenate([positions, vel], axis=1))
    x = np.stack(feats)  # [B, T, 4]
    b = x.shape[0]
    h = Tensor(np.zeros((b, params.hidden)))
    c = Tensor(np.zeros((b, params.hidden)))
    for t in range(x.shape[1]):
        h, c = lstm_cell_batch(Tensor(x[:, t, :]), h, c, params.encoder_cell)
    return h


def lstm_baseline_predict(
    times: np.ndarray,
    positions: np.ndarray,
    params: LstmBaselineParams,
    t_f: int,
    dt: float = 0.5,
) -> Trajectory:
    """Predict the target's future from its own history only."""
    context = lstm_baseline_encode_batch(
        [(np.asarray(times, dtype=np.float64), np.asarray(positions, dtype=np.float64))], params
    )
    steps = rollout(context, params.decoder, t_f)
    out = np.stack([s.data[0] for s in steps])
    return Trajectory(times=dt * np.arange(1, t_f + 1), positions=out)
