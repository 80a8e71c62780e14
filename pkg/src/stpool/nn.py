"""Layers built on the autodiff core: linear, batch norm, LSTM cell.

Parameter containers are plain dataclasses of :class:`~stpool.autodiff.Tensor`
so the optimizer and checkpoint code can walk them uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

MODES = ("train", "eval")


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def init_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


@dataclass
class LinearParams:
    weight: Tensor  # [din, dout]
    bias: Tensor  # [dout]

    @classmethod
    def init(cls, rng: np.random.Generator, din: int, dout: int) -> "LinearParams":
        return cls(
            weight=init_uniform(rng, (din, dout), din),
            bias=init_uniform(rng, (dout,), din),
        )


def linear_forward(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Row-wise affine map: out[k, j] = sum_i x[k, i] w[i, j] + b[j]."""
    x = ad.as_tensor(x)
    if x.data.ndim != 2:
        raise ValueError(f"linear_forward expects a matrix input, got {x.data.shape}")
    if weight.data.ndim != 2 or x.data.shape[1] != weight.data.shape[0]:
        raise ValueError(
            f"linear_forward shape mismatch: {x.data.shape} @ {weight.data.shape}"
        )
    if bias.data.shape != (weight.data.shape[1],):
        raise ValueError(
            f"bias shape {bias.data.shape} does not match output width "
            f"{weight.data.shape[1]}"
        )
    return ad.add(ad.matmul(x, weight), bias)


relu_forward = ad.relu


@dataclass
class BatchNormParams:
    """Per-channel affine batch norm with running statistics.

    ``gamma``/``beta`` are trainable; the running buffers are updated as a
    side effect of train-mode forward passes and are the only statistics used
    in eval mode (so batch-size-1 inference is well defined).
    """

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def init(cls, dim: int, momentum: float = 0.1, eps: float = 1e-5) -> "BatchNormParams":
        return cls(
            gamma=Tensor(np.ones(dim), requires_grad=True),
            beta=Tensor(np.zeros(dim), requires_grad=True),
            running_mean=np.zeros(dim),
            running_var=np.ones(dim),
            momentum=momentum,
            eps=eps,
        )


def batchnorm_forward(x: Tensor, bn: BatchNormParams, mode: str) -> Tensor:
    """Normalize each column of ``x`` [M, D] over its M rows.

    Train mode uses batch statistics (all rows pooled together) and updates
    the running buffers by exponential moving average; eval mode uses the
    running buffers only.
    """
    _check_mode(mode)
    x = ad.as_tensor(x)
    if x.data.ndim != 2:
        raise ValueError(f"batchnorm_forward expects a matrix, got {x.data.shape}")
    m = x.data.shape[0]
    if m < 1:
        raise ValueError("batchnorm_forward needs at least one row")
    if mode == "train":
        mu = ad.tmean(x, axis=0)
        centered = ad.sub(x, mu)
        var = ad.tmean(ad.mul(centered, centered), axis=0)
        inv_std = ad.power(ad.add(var, bn.eps), -0.5)
        normalized = ad.mul(centered, inv_std)
        # Running update is a side effect on plain buffers (not differentiated).
        unbiased = var.data * (m / (m - 1)) if m > 1 else var.data
        bn.running_mean *= 1.0 - bn.momentum
        bn.running_mean += bn.momentum * mu.data
        bn.running_var *= 1.0 - bn.momentum
        bn.running_var += bn.momentum * unbiased
    else:
        inv_std = (bn.running_var + bn.eps) ** -0.5
        normalized = ad.mul(ad.sub(x, bn.running_mean), inv_std)
    return ad.add(ad.mul(normalized, bn.gamma), bn.beta)


# LSTM gate layout within the 4H-wide combined weights.
_GATES = ("input", "forget", "candidate", "output")


@dataclass
class LstmCellParams:
    w_x: Tensor  # [din, 4H]
    w_h: Tensor  # [H, 4H]
    bias: Tensor  # [4H]
    hidden: int = field(default=0)

    def __post_init__(self):
        if self.hidden == 0:
            self.hidden = self.w_h.data.shape[0]

    @classmethod
    def init(cls, rng: np.random.Generator, din: int, hidden: int) -> "LstmCellParams":
        return cls(
            w_x=init_uniform(rng, (din, 4 * hidden), hidden),
            w_h=init_uniform(rng, (hidden, 4 * hidden), hidden),
            bias=init_uniform(rng, (4 * hidden,), hidden),
            hidden=hidden,
        )


def lstm_cell_batch(x: Tensor, h: Tensor, c: Tensor, params: LstmCellParams) -> tuple[Tensor, Tensor]:
    """One LSTM step over a batch: x [B, Din], h/c [B, H] -> (h', c')."""
    hdim = params.hidden
    if x.data.ndim != 2 or h.data.shape != (x.data.shape[0], hdim):
        raise ValueError(
            f"lstm shapes inconsistent: x {x.data.shape}, h {h.data.shape}, H={hdim}"
        )
    if c.data.shape != h.data.shape:
        raise ValueError(f"c shape {c.data.shape} != h shape {h.data.shape}")
    gates = ad.add(ad.add(ad.matmul(x, params.w_x), ad.matmul(h, params.w_h)), params.bias)
    i = ad.sigmoid(ad.slice_cols(gates, 0, hdim))
    f = ad.sigmoid(ad.slice_cols(gates, hdim, 2 * hdim))
    g = ad.tanh(ad.slice_cols(gates, 2 * hdim, 3 * hdim))
    o = ad.sigmoid(ad.slice_cols(gates, 3 * hdim, 4 * hdim))
    c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_new = ad.mul(o, ad.tanh(c_new))
    return h_new, c_new


def lstm_cell_step(x: Tensor, h: Tensor, c: Tensor, params: LstmCellParams) -> tuple[Tensor, Tensor]:
    """Single-sample LSTM step on vectors (x [Din], h/c [H])."""
    x = ad.as_tensor(x)
    h = ad.as_tensor(h)
    c = ad.as_tensor(c)
    h2, c2 = lstm_cell_batch(
        ad.reshape(x, (1, x.data.shape[-1])),
        ad.reshape(h, (1, h.data.shape[-1])),
        ad.reshape(c, (1, c.data.shape[-1])),
        params,
    )
    hdim = params.hidden
    return ad.reshape(h2, (hdim,)), ad.reshape(c2, (hdim,))
