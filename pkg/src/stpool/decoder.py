"""Future-trajectory generation from an encoded context vector.

The rollout is an LSTM whose step input is the previously predicted
displacement; displacements accumulate from the target's last observed
position (the frame origin). The stochastic variant concatenates a Gaussian
draw to the context before the rollout and is trained with a variety loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, EmptySetError
from .nn import LinearParams, LstmCellParams, linear_forward, lstm_cell_batch
from .representation import Trajectory


@dataclass
class DecoderParams:
    init_projection: LinearParams  # [H + noise_dim, 2H]: rows -> (h0 | c0)
    cell: LstmCellParams  # input width 2 (previous displacement)
    output_head: LinearParams  # [H, 2] per-step displacement in meters
    hidden: int
    noise_dim: int = 0
    noise_sigma: float = 1.0
    # Fixed meters-per-unit factor on the head output: the LSTM hidden state is
    # bounded by tanh, so without it the head weights alone must grow to the
    # multi-meter displacement scale, which dominates training time at small
    # step budgets.
    output_gain: float = 1.5

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        hidden: int = 128,
        noise_dim: int = 0,
        noise_sigma: float = 1.0,
        output_gain: float = 1.5,
    ) -> "DecoderParams":
        if noise_dim < 0 or noise_sigma < 0:
            raise ConfigError("noise_dim and noise_sigma must be nonnegative")
        init_projection = LinearParams.init(rng, hidden + noise_dim, 2 * hidden)
        # Keep the initial cell state inside tanh's near-linear zone.
        init_projection.weight.data *= 0.5
        cell = LstmCellParams.init(rng, 2, hidden)
        # Positive forget-gate bias so the projected context persists across
        # the rollout instead of decaying through random gates.
        cell.bias.data[hidden : 2 * hidden] += 1.0
        return cls(
            init_projection=init_projection,
            cell=cell,
            output_head=LinearParams.init(rng, hidden, 2),
            hidden=hidden,
            noise_dim=noise_dim,
            noise_sigma=noise_sigma,
            output_gain=output_gain,
        )


def rollout(contexts: Tensor, params: DecoderParams, t_f: int) -> list[Tensor]:
    """Batched displacement rollout: contexts [B, H+noise_dim] -> T_f x [B, 2].

    Returned tensors are cumulative positions; step k is the origin plus the
    sum of the first k displacements.
    """
    if t_f < 1:
        raise ConfigError(f"future horizon must be >= 1 step, got {t_f}")
    contexts = ad.as_tensor(contexts)
    b, width = contexts.data.shape
    expected = params.hidden + params.noise_dim
    if width != expected:
        raise ConfigError(f"context width {width} does not match decoder input {expected}")
    hc = linear_forward(contexts, params.init_projection.weight, params.init_projection.bias)
    h = ad.slice_cols(hc, 0, params.hidden)
    c = ad.slice_cols(hc, params.hidden, 2 * params.hidden)
    x = Tensor(np.zeros((b, 2)))
    positions: list[Tensor] = []
    pos: Tensor | None = None
    for _ in range(t_f):
        h, c = lstm_cell_batch(x, h, c, params.cell)
        disp = linear_forward(h, params.output_head.weight, params.output_head.bias)
        if params.output_gain != 1.0:
            disp = ad.mul(disp, params.output_gain)
        pos = disp if pos is None else ad.add(pos, disp)
        positions.append(pos)
        x = disp
    return positions


def _step_times(t_f: int, dt: float) -> np.ndarray:
    return dt * np.arange(1, t_f + 1)


def decode_deterministic(context, params: DecoderParams, t_f: int, dt: float = 0.5) -> Trajectory:
    """Deterministic rollout of a noise-free decoder; target-frame positions."""
    if params.noise_dim != 0:
        raise ConfigError("decoder is stochastic (noise_dim > 0); use decode_stochastic")
    context = ad.as_tensor(context)
    steps = rollout(ad.reshape(context, (1, params.hidden)), params, t_f)
    positions = np.stack([s.data[0] for s in steps])
    return Trajectory(times=_step_times(t_f, dt), positions=positions)


def decode_stochastic(
    context,
    params: DecoderParams,
    t_f: int,
    n_samples: int,
    rng_seed: int,
    dt: float = 0.5,
) -> list[Trajectory]:
    """N seeded rollouts, each with a fresh Gaussian draw appended to the context."""
    if params.noise_dim == 0:
        raise ConfigError("decoder has noise_dim == 0; stochastic decoding is not configured")
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    context = ad.as_tensor(context)
    rng = np.random.default_rng(rng_seed)
    noise = rng.normal(0.0, params.noise_sigma, size=(n_samples, params.noise_dim))
    stacked = np.concatenate(
        [np.broadcast_to(context.data, (n_samples, params.hidden)), noise], axis=1
    )
    steps = rollout(Tensor(stacked), params, t_f)
    times = _step_times(t_f, dt)
    all_positions = np.stack([s.data for s in steps], axis=1)  # [N, T, 2]
    return [Trajectory(times=times, positions=all_positions[n]) for n in range(n_samples)]


def l2_loss(pred: Trajectory, gt: Trajectory, type_weight: float = 1.0) -> float:
    """type_weight times the mean over steps of squared Euclidean distance."""
    if len(pred) != len(gt):
        raise ValueError(f"trajectory lengths differ: {len(pred)} vs {len(gt)}")
    sq = np.sum((pred.positions - gt.positions) ** 2, axis=1)
    return float(type_weight * np.mean(sq))


def variety_loss(samples: list[Trajectory], gt: Trajectory) -> float:
    """Minimum unweighted l2 loss over the candidate trajectories."""
    if not samples:
        raise EmptySetError("variety_loss over zero samples")
    return min(l2_loss(s, gt, 1.0) for s in samples)


# Graph-space loss builders used by the training loop.


def stepwise_sq_error(step_positions: list[Tensor], gt: np.ndarray) -> Tensor:
    """Per-sample mean squared distance: T_f x [B, 2] vs gt [B, T_f, 2] -> [B]."""
    t_f = len(step_positions)
    if gt.shape[1] != t_f:
        raise ValueError(f"ground truth has {gt.shape[1]} steps, rollout has {t_f}")
    total: Tensor | None = None
    for k, pos in enumerate(step_positions):
        d = ad.sub(pos, gt[:, k, :])
        sq = ad.tsum(ad.mul(d, d), axis=1)
        total = sq if total is None else ad.add(total, sq)
    return ad.mul(total, 1.0 / t_f)


def select_min(per_sample_losses: list[Tensor]) -> Tensor:
    """Elementwise min over candidate loss vectors [B]; gradient flows only
    through the argmin candidate of each element."""
    if not per_sample_losses:
        raise EmptySetError("select_min over zero candidates")
    if len(per_sample_losses) == 1:
        return per_sample_losses[0]
    values = np.stack([t.data for t in per_sample_losses])  # [N, B]
    winner = values.argmin(axis=0)  # [B]
    out: Tensor | None = None
    for n, t in enumerate(per_sample_losses):
        masked = ad.mul(t, (winner == n).astype(np.float64))
        out = masked if out is None else ad.add(out, masked)
    return out
