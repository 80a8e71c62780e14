"""Permutation-invariant context extraction over spatio-temporal point sets.

Each stage embeds rows with a shared two-layer MLP (linear, batch norm, ReLU)
and max-pools over the set. Refinement stages re-embed the raw rows with the
previous pooled context prepended, capturing interaction structure that a
single first-order pooling pass cannot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import EmptySetError
from .nn import BatchNormParams, LinearParams, batchnorm_forward, linear_forward
from .representation import PointSet


@dataclass
class EmbedLayer:
    linear: LinearParams
    bn: BatchNormParams


@dataclass
class EmbedBlock:
    layers: list[EmbedLayer]

    @classmethod
    def init(cls, rng: np.random.Generator, din: int, hidden: int, n_layers: int = 2) -> "EmbedBlock":
        layers = []
        width = din
        for _ in range(n_layers):
            layers.append(EmbedLayer(LinearParams.init(rng, width, hidden), BatchNormParams.init(hidden)))
            width = hidden
        return cls(layers)


@dataclass
class EncoderParams:
    """One embed block per stage; stage s >= 1 consumes [context | raw row]."""

    stages: list[EmbedBlock]
    hidden: int
    input_width: int

    @property
    def refinement_count(self) -> int:
        return len(self.stages) - 1

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        input_width: int,
        hidden: int = 128,
        refinements: int = 2,
        feature_scales: np.ndarray | None = None,
    ) -> "EncoderParams":
        """Random init, optionally routing-biased.

        With ``feature_scales`` given (one nominal magnitude per raw column,
        target flag last), first-layer weights are rescaled so every raw
        feature starts with comparable influence, and a fraction of each
        stage's channels is biased toward the target flag through both layers.
        Max pooling only propagates gradient to argmax points, so without this
        bias the channels that should describe the target agent start routed
        to arbitrary extreme neighbor points and crystallize slowly at small
        step budgets.
        """
        if refinements < 0:
            raise ValueError("refinements must be >= 0")
        stages = [EmbedBlock.init(rng, input_width, hidden)]
        for _ in range(refinements):
            stages.append(EmbedBlock.init(rng, hidden + input_width, hidden))
        params = cls(stages=stages, hidden=hidden, input_width=input_width)
        if feature_scales is not None:
            _apply_routing_bias(params, np.asarray(feature_scales, dtype=np.float64))
        return params


_FLAG_BOOST_L0 = 1.5  # target-flag coefficient added at stage entry
_FLAG_BOOST_L1 = 3.0  # diagonal carry of routed channels through layer 2
_ROUTED_FRACTION = 0.75


def _apply_routing_bias(params: "EncoderParams", raw_scales: np.ndarray) -> None:
    if raw_scales.shape[0] != params.input_width:
        raise ValueError(
            f"feature_scales has {raw_scales.shape[0]} entries for input width "
            f"{params.input_width}"
        )
    n_routed = int(_ROUTED_FRACTION * params.hidden)
    for s, stage in enumerate(params.stages):
        layer0, layer1 = stage.layers[0], stage.layers[-1]
        if s == 0:
            scales = raw_scales
        else:
            scales = np.concatenate([np.ones(params.hidden), raw_scales])
        flag_col = scales.shape[0] - 1
        layer0.linear.weight.data /= scales[:, None]
        layer0.linear.weight.data[flag_col, :n_routed] += _FLAG_BOOST_L0
        for d in range(n_routed):
            layer1.linear.weight.data[d, d] += _FLAG_BOOST_L1


def embed_stage(rows: Tensor, block: EmbedBlock, mode: str) -> Tensor:
    """Apply one stage's shared MLP row-wise: [K, Din] -> [K, H]."""
    x = ad.as_tensor(rows)
    for layer in block.layers:
        x = ad.relu(batchnorm_forward(linear_forward(x, layer.linear.weight, layer.linear.bias), layer.bn, mode))
    return x


def _stack_batch(batch: list[PointSet]) -> tuple[np.ndarray, list[tuple[int, int]], np.ndarray, list[np.ndarray]]:
    """Stack unmasked rows of all sets; returns rows, segments, row->sample ids,
    and per-sample absolute point indices."""
    if not batch:
        raise EmptySetError("empty batch")
    blocks, segments, seg_ids, valid_per_sample = [], [], [], []
    offset = 0
    for b, ps in enumerate(batch):
        valid = np.flatnonzero(ps.mask)
        if valid.size == 0:
            raise EmptySetError(f"point set {b} has no unmasked points")
        blocks.append(ps.encoding[valid])
        segments.append((offset, offset + valid.size))
        seg_ids.append(np.full(valid.size, b, dtype=np.intp))
        valid_per_sample.append(valid)
        offset += valid.size
    return np.concatenate(blocks, axis=0), segments, np.concatenate(seg_ids), valid_per_sample


def batch_st_pooling(batch: list[PointSet], params: EncoderParams, mode: str) -> Tensor:
    """Segmented pooling over a batch of variable-size sets: -> [B, H].

    Per-sample segments keep pooling strictly within each sample; train-mode
    batch-norm statistics pool over all points of all samples.
    """
    pooled, _ = _batch_forward(batch, params, mode)
    return pooled


def _batch_forward(batch: list[PointSet], params: EncoderParams, mode: str):
    rows_np, segments, seg_ids, valid = _stack_batch(batch)
    if rows_np.shape[1] != params.input_width:
        raise ValueError(
            f"point rows have width {rows_np.shape[1]}, encoder expects {params.input_width}"
        )
    raw = Tensor(rows_np)
    embedded = embed_stage(raw, params.stages[0], mode)
    pooled, argmax = ad.segment_max(embedded, segments)
    for block in params.stages[1:]:
        context_rows = ad.gather_rows(pooled, seg_ids)
        embedded = embed_stage(ad.concat_cols(context_rows, raw), block, mode)
        pooled, argmax = ad.segment_max(embedded, segments)
    # Trace: final-stage pre-pool activations and, per sample, the point index
    # (into PointSet.points) attaining each pooled channel.
    argmax_points = []
    for b, (start, _stop) in enumerate(segments):
        argmax_points.append(valid[b][argmax[b] - start])
    trace = {"pre_pool": embedded, "argmax_points": argmax_points, "valid": valid, "segments": segments}
    return pooled, trace


def st_pooling(ps: PointSet, params: EncoderParams, mode: str) -> Tensor:
    """Context vector [H] for a single point set."""
    pooled = batch_st_pooling([ps], params, mode)
    return ad.reshape(pooled, (params.hidden,))


def st_pooling_trace(ps: PointSet, params: EncoderParams, mode: str):
    """Like :func:`st_pooling` but also returns the final pre-pool activations.

    Returns (context [H], pre_pool [K', H] ndarray, argmax_points [H] point
    indices, valid row indices [K']).
    """
    pooled, trace = _batch_forward([ps], params, mode)
    context = ad.reshape(pooled, (params.hidden,))
    return context, trace["pre_pool"].data, trace["argmax_points"][0], trace["valid"][0]
