"""Export what individual pooled channels respond to.

Two views: (a) a grid sweep over single-neighbor probe points spanning
(x1, x2, t), recording the final-stage pre-pool activation as a response
field; (b) per evaluated scene, each channel's pooled value together with the
identity of the point that attained it, ranked by value.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .encoder import batch_st_pooling, st_pooling_trace
from .errors import ConfigError
from .model import Model
from .pipeline import Prepared
from .representation import PointSet, SpatioTemporalPoint


@dataclass(frozen=True)
class SweepGrid:
    """Probe grid; defaults span the context box at coarse resolution."""

    x1_min: float = -90.0
    x1_max: float = 90.0
    x1_step: float = 5.0
    x2_min: float = -15.0
    x2_max: float = 15.0
    x2_step: float = 1.0
    t_min: float = -3.0
    t_max: float = 0.0
    t_step: float = 0.5

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            _inclusive_range(self.x1_min, self.x1_max, self.x1_step),
            _inclusive_range(self.x2_min, self.x2_max, self.x2_step),
            _inclusive_range(self.t_min, self.t_max, self.t_step),
        )


def _inclusive_range(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(round((hi - lo) / step)) + 1
    return lo + step * np.arange(n)


def _check_channels(channels, hidden: int) -> None:
    for d in channels:
        if not 0 <= d < hidden:
            raise ConfigError(f"channel {d} out of range [0, {hidden})")


def median_neighbor_velocity(prepared: list[Prepared]) -> tuple[float, float]:
    vs = [p.v for pr in prepared for p in pr.point_set.points if not p.is_target]
    if not vs:
        return (0.0, 0.0)
    arr = np.array(vs)
    return float(np.median(arr[:, 0])), float(np.median(arr[:, 1]))


def dominant_neighbor_type(prepared: list[Prepared]) -> str:
    counts = Counter(
        p.agent_type for pr in prepared for p in pr.point_set.points if not p.is_target
    )
    return counts.most_common(1)[0][0] if counts else "unknown"


def select_channels(model: Model, prepared: list[Prepared], n: int = 2) -> list[int]:
    """Default neuron selection: channels with the highest pooled variance."""
    pooled = batch_st_pooling([p.point_set for p in prepared], model.encoder, "eval")
    variance = pooled.data.var(axis=0)
    return [int(d) for d in np.argsort(-variance)[:n]]


def sweep_field(
    model: Model,
    channels: list[int],
    grid: SweepGrid = SweepGrid(),
    probe_velocity: tuple[float, float] = (0.0, 0.0),
    probe_type: str = "vehicle",
) -> list[tuple[int, float, float, float, float]]:
    """Response field rows (channel, x1, x2, t, activation).

    Each grid node is presented as a single-neighbor point set, so the
    recorded value is the stage-final pre-pool activation for that snapshot.
    """
    _check_channels(channels, model.config.hidden)
    x1s, x2s, ts = grid.axes()
    features = model.config.features
    probes: list[PointSet] = []
    coords: list[tuple[float, float, float]] = []
    for x1 in x1s:
        for x2 in x2s:
            for t in ts:
                point = SpatioTemporalPoint(
                    x=(float(x1), float(x2)),
                    v=probe_velocity,
                    agent_type=probe_type,
                    t=float(t),
                    is_target=False,
                    agent_id=-1,
                )
                enc = point.encode(features)[None, :]
                probes.append(PointSet([point], enc, np.ones(1, dtype=bool)))
                coords.append((float(x1), float(x2), float(t)))
    pooled = batch_st_pooling(probes, model.encoder, "eval")
    rows = []
    for d in channels:
        for (x1, x2, t), value in zip(coords, pooled.data[:, d]):
            rows.append((d, x1, x2, t, float(value)))
    return rows


def scene_channel_activations(
    model: Model, prepared: list[Prepared], channels: list[int]
) -> list[tuple[int, int, float, int, float, int, int]]:
    """Rows (channel, scene_index, value, agent_id, point_t, is_target, rank).

    Rank orders scenes per channel by descending pooled value, mirroring the
    case-ranking presentation of the response-field analysis.
    """
    _check_channels(channels, model.config.hidden)
    per_channel: dict[int, list[tuple[int, float, SpatioTemporalPoint]]] = {d: [] for d in channels}
    for idx, pr in enumerate(prepared):
        context, _pre_pool, argmax_points, _valid = st_pooling_trace(
            pr.point_set, model.encoder, "eval"
        )
        for d in channels:
            point = pr.point_set.points[int(argmax_points[d])]
            per_channel[d].append((idx, float(context.data[d]), point))
    rows = []
    for d in channels:
        ranked = sorted(per_channel[d], key=lambda item: -item[1])
        rank_of = {idx: r for r, (idx, _, _) in enumerate(ranked)}
        for idx, value, point in per_channel[d]:
            rows.append(
                (d, idx, value, point.agent_id, point.t, int(point.is_target), rank_of[idx])
            )
    return rows


def write_field_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("channel,x1,x2,t,activation\n")
        for d, x1, x2, t, value in rows:
            fh.write(f"{d},{x1!r},{x2!r},{t!r},{value!r}\n")


def write_scene_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("channel,scene_index,value,agent_id,point_t,is_target,rank\n")
        for d, idx, value, agent_id, t, is_target, rank in rows:
            fh.write(f"{d},{idx},{value!r},{agent_id},{t!r},{is_target},{rank}\n")
