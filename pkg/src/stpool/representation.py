"""Scenes, reference-frame normalization, and point-set encoding.

A prediction sample is a :class:`Scene`: per-agent history tracks (gaps
allowed), the target's ground-truth future, and a prediction time. Scenes are
normalized into a target-centric frame and flattened into an unordered set of
per-observation points, one row per (agent, timestamp) snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError

AGENT_TYPES = ("vehicle", "pedestrian", "bicycle", "unknown")

_TIME_TOL = 1e-9


@dataclass
class Trajectory:
    """Ordered timestamped 2-D positions."""

    times: np.ndarray  # [T]
    positions: np.ndarray  # [T, 2]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        if self.times.shape[0] != self.positions.shape[0]:
            raise DataError("trajectory times and positions disagree in length")

    def __len__(self) -> int:
        return self.times.shape[0]


@dataclass
class Track:
    """Timestamped 2-D observations of one agent."""

    agent_id: int
    agent_type: str
    times: np.ndarray  # [n]
    positions: np.ndarray  # [n, 2]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        if self.times.shape[0] != self.positions.shape[0]:
            raise DataError(
                f"agent {self.agent_id}: {self.times.shape[0]} timestamps for "
                f"{self.positions.shape[0]} positions"
            )
        if self.agent_type not in AGENT_TYPES:
            raise DataError(f"unknown agent type {self.agent_type!r}")
        if np.any(np.diff(self.times) <= 0.0):
            raise DataError(f"agent {self.agent_id}: timestamps must strictly increase")

    def __len__(self) -> int:
        return self.times.shape[0]


@dataclass
class FrameTransform:
    """Rigid transform into the target-centric frame plus a time shift.

    Frame coordinates: p' = R (p - origin), t' = t - t_offset.
    """

    origin: np.ndarray  # [2]
    rotation: np.ndarray  # [2, 2]
    t_offset: float

    def apply_positions(self, p: np.ndarray) -> np.ndarray:
        return (np.asarray(p, dtype=np.float64) - self.origin) @ self.rotation.T

    def invert_positions(self, p: np.ndarray) -> np.ndarray:
        return np.asarray(p, dtype=np.float64) @ self.rotation + self.origin

    def apply_times(self, t: np.ndarray) -> np.ndarray:
        return np.asarray(t, dtype=np.float64) - self.t_offset


@dataclass
class Scene:
    """One prediction sample: multi-agent history plus the target's future."""

    target_id: int
    tracks: dict[int, Track]
    future_times: np.ndarray
    future_positions: np.ndarray
    prediction_time: float
    frame: FrameTransform | None = None
    truth: dict = field(default_factory=dict)

    def __post_init__(self):
        self.future_times = np.asarray(self.future_times, dtype=np.float64)
        self.future_positions = np.asarray(self.future_positions, dtype=np.float64).reshape(-1, 2)
        if self.target_id not in self.tracks:
            raise DataError(f"target {self.target_id} has no history track")
        if len(self.tracks[self.target_id]) < 2:
            raise DataError("target needs at least 2 history observations")

    @property
    def target(self) -> Track:
        return self.tracks[self.target_id]

    def neighbor_ids(self) -> list[int]:
        return sorted(a for a in self.tracks if a != self.target_id)


def derive_velocity(times: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Backward-difference velocities with gap-aware time deltas.

    The first observation copies the second's velocity; a single-observation
    track gets zero velocity.
    """
    times = np.asarray(times, dtype=np.float64)
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    n = times.shape[0]
    if n == 0:
        return np.zeros((0, 2))
    v = np.zeros((n, 2))
    if n == 1:
        return v
    dt = np.diff(times)
    if np.any(dt == 0.0):
        raise DataError("duplicate timestamps in track")
    v[1:] = np.diff(positions, axis=0) / dt[:, None]
    v[0] = v[1]
    return v


def to_reference_frame(scene: Scene, align_heading: bool = True) -> Scene:
    """Translate, optionally rotate, and time-shift a scene.

    The target's last observed position becomes the origin, the prediction
    time becomes t=0, and (when enabled) the target's last-observed heading is
    rotated onto +x. The transform is retained on the returned scene so
    predictions can be mapped back.
    """
    target = scene.target
    origin = target.positions[-1].copy()
    if align_heading:
        v_last = derive_velocity(target.times, target.positions)[-1]
        speed = float(np.hypot(v_last[0], v_last[1]))
        if speed > 1e-12:
            c, s = v_last[0] / speed, v_last[1] / speed
            rotation = np.array([[c, s], [-s, c]])
        else:
            rotation = np.eye(2)
    else:
        rotation = np.eye(2)
    frame = FrameTransform(origin=origin, rotation=rotation, t_offset=scene.prediction_time)
    tracks = {
        aid: replace(
            tr,
            times=frame.apply_times(tr.times),
            positions=frame.apply_positions(tr.positions),
        )
        for aid, tr in scene.tracks.items()
    }
    return Scene(
        target_id=scene.target_id,
        tracks=tracks,
        future_times=frame.apply_times(scene.future_times),
        future_positions=frame.apply_positions(scene.future_positions),
        prediction_time=0.0,
        frame=frame,
        truth=scene.truth,
    )


@dataclass(frozen=True)
class FeatureConfig:
    """Which per-point features enter the encoded rows.

    The target flag is always kept; the remaining features can be toggled for
    input ablations.
    """

    position: bool = True
    velocity: bool = True
    agent_type: bool = True
    time: bool = True

    @property
    def width(self) -> int:
        return 2 * self.position + 2 * self.velocity + 4 * self.agent_type + self.time + 1

    def names(self) -> list[str]:
        out = []
        if self.position:
            out.append("position")
        if self.velocity:
            out.append("velocity")
        if self.agent_type:
            out.append("agent_type")
        if self.time:
            out.append("time")
        return out

    @classmethod
    def from_names(cls, names) -> "FeatureConfig":
        names = set(names)
        known = {"position", "velocity", "agent_type", "time"}
        unknown = names - known
        if unknown:
            raise DataError(f"unknown features {sorted(unknown)}; known: {sorted(known)}")
        return cls(
            position="position" in names,
            velocity="velocity" in names,
            agent_type="agent_type" in names,
            time="time" in names,
        )

    def scales(self) -> np.ndarray:
        """Nominal per-column magnitudes of encoded rows (meters, m/s, s).

        Used to balance the first embedding layer's initialization so no raw
        feature dominates purely by unit choice.
        """
        out = []
        if self.position:
            out += [30.0, 10.0]
        if self.velocity:
            out += [5.0, 5.0]
        if self.agent_type:
            out += [1.0, 1.0, 1.0, 1.0]
        if self.time:
            out += [1.5]
        out += [1.0]  # target flag
        return np.array(out)


@dataclass(frozen=True)
class SpatioTemporalPoint:
    """One agent snapshot in the unified space (frame coordinates)."""

    x: tuple[float, float]
    v: tuple[float, float]
    agent_type: str
    t: float
    is_target: bool
    agent_id: int  # identity for analysis output, never encoded

    def encode(self, features: FeatureConfig) -> np.ndarray:
        parts = []
        if features.position:
            parts.extend(self.x)
        if features.velocity:
            parts.extend(self.v)
        if features.agent_type:
            onehot = [0.0] * len(AGENT_TYPES)
            onehot[AGENT_TYPES.index(self.agent_type)] = 1.0
            parts.extend(onehot)
        if features.time:
            parts.append(self.t)
        parts.append(1.0 if self.is_target else 0.0)
        return np.array(parts)


@dataclass
class PointSet:
    """Unordered point collection with its encoded matrix.

    Row order carries no meaning; ``mask`` is all-true after construction and
    exists so callers can exclude rows without rebuilding.
    """

    points: list[SpatioTemporalPoint]
    encoding: np.ndarray  # [K, Q]
    mask: np.ndarray  # [K] bool

    def __len__(self) -> int:
        return len(self.points)


def build_point_set(
    scene: Scene,
    features: FeatureConfig = FeatureConfig(),
    history_seconds: float = 3.0,
) -> PointSet:
    """Flatten a normalized scene into one point per observed snapshot.

    Agents with partial histories contribute exactly their observed
    snapshots; nothing is padded or dropped wholesale.
    """
    if scene.frame is None:
        raise ValueError("build_point_set requires a scene normalized by to_reference_frame")
    points: list[SpatioTemporalPoint] = []
    for aid in sorted(scene.tracks):
        tr = scene.tracks[aid]
        vel = derive_velocity(tr.times, tr.positions)
        is_target = aid == scene.target_id
        for i in range(len(tr)):
            t = float(tr.times[i])
            if t < -history_seconds - _TIME_TOL or t > _TIME_TOL:
                continue
            points.append(
                SpatioTemporalPoint(
                    x=(float(tr.positions[i, 0]), float(tr.positions[i, 1])),
                    v=(float(vel[i, 0]), float(vel[i, 1])),
                    agent_type=tr.agent_type,
                    t=t,
                    is_target=is_target,
                    agent_id=aid,
                )
            )
    if not any(p.is_target for p in points):
        raise DataError("no target observations inside the history window")
    encoding = np.stack([p.encode(features) for p in points])
    return PointSet(points=points, encoding=encoding, mask=np.ones(len(points), dtype=bool))


def filter_range(ps: PointSet, longitudinal_limit: float, lateral_limit: float) -> PointSet:
    """Drop neighbor points outside the axis-aligned context box.

    Assumes a heading-aligned frame (longitudinal = x-axis). Target points
    are always retained.
    """
    keep = [
        i
        for i, p in enumerate(ps.points)
        if p.is_target
        or (abs(p.x[0]) <= longitudinal_limit and abs(p.x[1]) <= lateral_limit)
    ]
    return subset_points(ps, keep)


def subset_points(ps: PointSet, keep_indices) -> PointSet:
    """A new PointSet containing only the selected rows."""
    keep = np.asarray(list(keep_indices), dtype=np.intp)
    return PointSet(
        points=[ps.points[i] for i in keep],
        encoding=ps.encoding[keep],
        mask=ps.mask[keep],
    )
