"""Dataset ingestion, synthetic scenario generation, splitting and batching.

The on-disk format is a flat CSV with header
``frame_id,timestamp,agent_id,agent_type,x,y`` (decimal floats, UTF-8, LF).
Synthetic generators are deterministic functions of their seed and each scene
carries its generative ground truth for oracle checks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError
from .representation import AGENT_TYPES, Scene, Track

CSV_HEADER = ["frame_id", "timestamp", "agent_id", "agent_type", "x", "y"]

SCENARIO_KINDS = ("constant_velocity", "lead_brake", "crossing", "dropout")

_GRID_TOL = 1e-6


def parse_csv(path) -> list[Track]:
    """Read tracks grouped by agent and sorted by time.

    Malformed rows, duplicate (frame, agent) pairs, and timestamps that do not
    increase with frame id are reported with their line numbers.
    """
    rows: dict[int, list[tuple[int, float, np.ndarray]]] = {}
    types: dict[int, str] = {}
    seen: dict[tuple[int, int], int] = {}
    frame_time: dict[int, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file (missing header)") from None
        if header != CSV_HEADER:
            raise DataError(f"{path}: expected header {','.join(CSV_HEADER)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise DataError(f"{path}:{lineno}: expected 6 columns, got {len(row)}")
            try:
                frame = int(row[0])
                t = float(row[1])
                agent = int(row[2])
                x = float(row[4])
                y = float(row[5])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            agent_type = row[3]
            if agent_type not in AGENT_TYPES:
                raise DataError(
                    f"{path}:{lineno}: unknown agent_type {agent_type!r} "
                    f"(expected one of {', '.join(AGENT_TYPES)})"
                )
            key = (frame, agent)
            if key in seen:
                raise DataError(
                    f"{path}:{lineno}: duplicate (frame_id, agent_id) {key}, "
                    f"first seen on line {seen[key]}"
                )
            seen[key] = lineno
            if frame in frame_time and abs(frame_time[frame] - t) > _GRID_TOL:
                raise DataError(f"{path}:{lineno}: frame {frame} has inconsistent timestamps")
            frame_time[frame] = t
            if agent in types and types[agent] != agent_type:
                raise DataError(f"{path}:{lineno}: agent {agent} changes type")
            types[agent] = agent_type
            rows.setdefault(agent, []).append((frame, t, np.array([x, y])))
    tracks = []
    for agent in sorted(rows):
        obs = sorted(rows[agent], key=lambda r: r[0])
        times = np.array([o[1] for o in obs])
        if np.any(np.diff(times) <= 0.0):
            raise DataError(f"{path}: agent {agent}: timestamps do not increase with frame_id")
        tracks.append(
            Track(
                agent_id=agent,
                agent_type=types[agent],
                times=times,
                positions=np.stack([o[2] for o in obs]),
            )
        )
    return tracks


def write_csv(path, tracks: list[Track]) -> None:
    """Write tracks in the canonical schema; frame ids index the time grid."""
    all_times = np.unique(np.concatenate([tr.times for tr in tracks]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        entries = []
        for tr in tracks:
            for i in range(len(tr)):
                frame = int(np.argmin(np.abs(all_times - tr.times[i])))
                entries.append(
                    (
                        frame,
                        tr.agent_id,
                        repr(float(tr.times[i])),
                        tr.agent_type,
                        repr(float(tr.positions[i, 0])),
                        repr(float(tr.positions[i, 1])),
                    )
                )
        for frame, agent, t, typ, x, y in sorted(entries):
            writer.writerow([frame, t, agent, typ, x, y])


@dataclass(frozen=True)
class WindowConfig:
    """Sliding-window parameters; history_steps includes the prediction-time frame."""

    history_steps: int = 7
    future_steps: int = 6
    dt: float = 0.5
    stride: int = 1

    def __post_init__(self):
        if self.history_steps < 2 or self.future_steps < 1 or self.stride < 1:
            raise ConfigError("window needs history_steps >= 2, future_steps >= 1, stride >= 1")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")


def scenes_from_tracks(tracks: list[Track], window: WindowConfig) -> list[Scene]:
    """Slice tracks into prediction samples.

    Every agent with a complete future inside a window becomes the target of
    one scene; other agents contribute whatever history observations they
    have, gaps preserved. Nothing is fabricated: every point maps back to an
    input observation.
    """
    if not tracks:
        return []
    t_min = min(float(tr.times[0]) for tr in tracks)
    index_of: dict[int, dict[int, int]] = {}
    max_idx = 0
    for tr in tracks:
        idx = np.rint((tr.times - t_min) / window.dt).astype(int)
        off = tr.times - (t_min + idx * window.dt)
        if np.any(np.abs(off) > _GRID_TOL):
            bad = int(np.argmax(np.abs(off)))
            raise DataError(
                f"agent {tr.agent_id}: timestamp {tr.times[bad]} is off the "
                f"{window.dt}s grid anchored at {t_min}"
            )
        index_of[tr.agent_id] = {int(k): i for i, k in enumerate(idx)}
        max_idx = max(max_idx, int(idx[-1]))
    length = window.history_steps + window.future_steps
    scenes: list[Scene] = []
    for start in range(0, max_idx - length + 2, window.stride):
        pred_idx = start + window.history_steps - 1
        future_idx = range(start + window.history_steps, start + length)
        history_tracks: dict[int, Track] = {}
        for tr in tracks:
            have = [k for k in range(start, pred_idx + 1) if k in index_of[tr.agent_id]]
            if have:
                sel = [index_of[tr.agent_id][k] for k in have]
                history_tracks[tr.agent_id] = replace(
                    tr, times=tr.times[sel], positions=tr.positions[sel]
                )
        for tr in tracks:
            if not all(k in index_of[tr.agent_id] for k in future_idx):
                continue
            if tr.agent_id not in history_tracks or len(history_tracks[tr.agent_id]) < 2:
                continue
            sel = [index_of[tr.agent_id][k] for k in future_idx]
            scenes.append(
                Scene(
                    target_id=tr.agent_id,
                    tracks=dict(history_tracks),
                    future_times=tr.times[sel],
                    future_positions=tr.positions[sel],
                    prediction_time=t_min + pred_idx * window.dt,
                )
            )
    return scenes


@dataclass
class ScenarioConfig:
    """Synthetic scenario description; generation is a pure function of this."""

    kind: str = "constant_velocity"
    n_scenes: int = 512
    n_agents_min: int = 2
    n_agents_max: int = 8
    dt: float = 0.5
    history_steps: int = 7
    future_steps: int = 6
    noise_sigma: float = 0.0
    dropout_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ConfigError(
                f"unknown scenario kind {self.kind!r}; valid kinds: {', '.join(SCENARIO_KINDS)}"
            )
        if self.n_scenes < 1:
            raise ConfigError("n_scenes must be >= 1")
        if not 2 <= self.n_agents_min <= self.n_agents_max:
            raise ConfigError("need 2 <= n_agents_min <= n_agents_max")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if self.noise_sigma < 0.0:
            raise ConfigError("noise_sigma must be nonnegative")
        if self.history_steps < 2 or self.future_steps < 1 or self.dt <= 0:
            raise ConfigError("need history_steps >= 2, future_steps >= 1, dt > 0")

    @property
    def window(self) -> WindowConfig:
        return WindowConfig(self.history_steps, self.future_steps, self.dt)


_SPEED_RANGE = {
    "vehicle": (3.0, 10.0),
    "pedestrian": (0.5, 2.0),
    "bicycle": (1.5, 5.0),
    "unknown": (1.0, 8.0),
}

_TARGET_TYPE_CYCLE = ("vehicle", "pedestrian", "bicycle")


def _cv_positions(start: np.ndarray, velocity: np.ndarray, times: np.ndarray) -> np.ndarray:
    return start[None, :] + times[:, None] * velocity[None, :]


def _braking_distance(t: np.ndarray, v0: float, t_brake: float, decel: float) -> np.ndarray:
    """Distance along the lane for speed v0 until t_brake, then decel to a stop."""
    tau = np.clip(t - t_brake, 0.0, v0 / decel)
    free = np.minimum(t, t_brake) * v0
    return free + v0 * tau - 0.5 * decel * tau * tau


def generate_synthetic(cfg: ScenarioConfig) -> list[Scene]:
    """Deterministically generate desk-scale scenes of the configured kind."""
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_scenes)
    base_kind = "lead_brake" if cfg.kind == "dropout" else cfg.kind
    dropout = cfg.dropout_rate
    if cfg.kind == "dropout" and dropout == 0.0:
        dropout = 0.3
    scenes = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        target_type = _TARGET_TYPE_CYCLE[i % len(_TARGET_TYPE_CYCLE)]
        if base_kind == "constant_velocity":
            scene = _gen_constant_velocity(rng, cfg, target_type)
        elif base_kind == "lead_brake":
            scene = _gen_lead_brake(rng, cfg)
        else:
            scene = _gen_crossing(rng, cfg, target_type)
        scene = _apply_history_noise(rng, scene, cfg.noise_sigma)
        if dropout > 0.0:
            scene = _apply_neighbor_dropout(rng, scene, dropout)
        scenes.append(scene)
    return scenes


def _timeline(cfg: ScenarioConfig) -> tuple[np.ndarray, np.ndarray, float]:
    n = cfg.history_steps + cfg.future_steps
    times = cfg.dt * np.arange(n)
    pred_time = cfg.dt * (cfg.history_steps - 1)
    hist = times[: cfg.history_steps]
    fut = times[cfg.history_steps :]
    return hist, fut, pred_time


def _heading(rng: np.random.Generator) -> np.ndarray:
    a = rng.uniform(0.0, 2.0 * np.pi)
    return np.array([np.cos(a), np.sin(a)])


def _gen_constant_velocity(rng, cfg: ScenarioConfig, target_type: str) -> Scene:
    hist, fut, pred_time = _timeline(cfg)
    n_agents = int(rng.integers(cfg.n_agents_min, cfg.n_agents_max + 1))
    anchor = rng.uniform(-50.0, 50.0, 2)
    tracks: dict[int, Track] = {}
    future_positions = None
    truth = {}
    for aid in range(n_agents):
        agent_type = target_type if aid == 0 else AGENT_TYPES[int(rng.integers(0, 4))]
        lo, hi = _SPEED_RANGE[agent_type]
        speed = rng.uniform(lo, hi)
        velocity = speed * _heading(rng)
        start = anchor + (np.zeros(2) if aid == 0 else rng.uniform(-30.0, 30.0, 2))
        tracks[aid] = Track(aid, agent_type, hist, _cv_positions(start, velocity, hist))
        if aid == 0:
            future_positions = _cv_positions(start, velocity, fut)
            truth = {"velocity": velocity, "start": start}
    return Scene(0, tracks, fut, future_positions, pred_time, truth=truth)


def _gen_lead_brake(rng, cfg: ScenarioConfig) -> Scene:
    """Follower behind a braking leader; the follower reacts after a delay.

    The leader starts braking during late history; the follower's braking
    onset (brake time + reaction delay) always lands in the future window, so
    predicting it requires the leader's earlier deceleration.
    """
    hist, fut, pred_time = _timeline(cfg)
    all_t = np.concatenate([hist, fut])
    lane = _heading(rng)
    anchor = rng.uniform(-50.0, 50.0, 2)
    v0 = rng.uniform(5.0, 12.0)
    gap = rng.uniform(8.0, 20.0)
    decel = rng.uniform(2.0, 4.0)
    delay = rng.uniform(0.5, 1.0)
    # Brake late enough that the follower's reaction lands strictly in the
    # future window, but early enough that the leader's deceleration is
    # visible in the history observations.
    t_brake = pred_time - (delay - rng.uniform(0.05, 0.3))
    leader_s = _braking_distance(all_t, v0, t_brake, decel)
    follower_s = _braking_distance(all_t, v0, t_brake + delay, decel)
    leader_pos = anchor + gap * lane + leader_s[:, None] * lane
    follower_pos = anchor + follower_s[:, None] * lane
    n_hist = cfg.history_steps
    tracks = {
        0: Track(0, "vehicle", hist, follower_pos[:n_hist]),
        1: Track(1, "vehicle", hist, leader_pos[:n_hist]),
    }
    n_agents = int(rng.integers(cfg.n_agents_min, cfg.n_agents_max + 1))
    for aid in range(2, n_agents):
        perp = np.array([-lane[1], lane[0]])
        offset = rng.uniform(3.0, 12.0) * perp * rng.choice([-1.0, 1.0])
        speed = rng.uniform(3.0, 10.0) * rng.choice([-1.0, 1.0])
        start = anchor + offset + rng.uniform(-20.0, 20.0) * lane
        tracks[aid] = Track(aid, "vehicle", hist, _cv_positions(start, speed * lane, hist))
    truth = {"t_brake": t_brake, "delay": delay, "decel": decel, "v0": v0, "lane": lane}
    return Scene(0, tracks, fut, follower_pos[n_hist:], pred_time, truth=truth)


def _gen_crossing(rng, cfg: ScenarioConfig, target_type: str) -> Scene:
    """Two agents on intersecting paths; the target yields to the crosser."""
    hist, fut, pred_time = _timeline(cfg)
    all_t = np.concatenate([hist, fut])
    conflict = rng.uniform(-50.0, 50.0, 2)
    u_a = _heading(rng)
    u_b = np.array([-u_a[1], u_a[0]])
    v_a = rng.uniform(5.0, 10.0)
    lo, hi = _SPEED_RANGE[target_type]
    v_b = rng.uniform(lo, hi)
    t_yield = pred_time + rng.uniform(0.1, 1.0)
    d_near = rng.uniform(8.0, 14.0)
    # A reaches distance d_near from the conflict point exactly at t_yield.
    a_pos = conflict[None, :] - (d_near + v_a * (t_yield - all_t))[:, None] * u_a[None, :]
    t_b_star = t_yield + rng.uniform(1.0, 2.0)
    b_free = conflict[None, :] - (v_b * (t_b_star - all_t))[:, None] * u_b[None, :]
    decel = rng.uniform(1.5, 3.0)
    after = np.clip(all_t - t_yield, 0.0, v_b / decel)
    b_pos = b_free + (-(0.5 * decel * after * after))[:, None] * u_b[None, :]
    n_hist = cfg.history_steps
    tracks = {
        0: Track(0, target_type, hist, b_pos[:n_hist]),
        1: Track(1, "vehicle", hist, a_pos[:n_hist]),
    }
    n_agents = int(rng.integers(cfg.n_agents_min, cfg.n_agents_max + 1))
    for aid in range(2, n_agents):
        agent_type = AGENT_TYPES[int(rng.integers(0, 4))]
        lo2, hi2 = _SPEED_RANGE[agent_type]
        velocity = rng.uniform(lo2, hi2) * _heading(rng)
        start = conflict + rng.uniform(-30.0, 30.0, 2)
        tracks[aid] = Track(aid, agent_type, hist, _cv_positions(start, velocity, hist))
    truth = {"t_yield": t_yield, "decel": decel, "v_b": v_b}
    return Scene(0, tracks, fut, b_pos[n_hist:], pred_time, truth=truth)


def _apply_history_noise(rng, scene: Scene, sigma: float) -> Scene:
    if sigma <= 0.0:
        return scene
    tracks = {
        aid: replace(tr, positions=tr.positions + rng.normal(0.0, sigma, tr.positions.shape))
        for aid, tr in scene.tracks.items()
    }
    return replace(scene, tracks=tracks)


def _apply_neighbor_dropout(rng, scene: Scene, rate: float) -> Scene:
    """Bernoulli-remove neighbor observations; the target track is untouched."""
    tracks: dict[int, Track] = {scene.target_id: scene.tracks[scene.target_id]}
    for aid in scene.neighbor_ids():
        tr = scene.tracks[aid]
        keep = rng.random(len(tr)) >= rate
        if not np.any(keep):
            continue
        tracks[aid] = replace(tr, times=tr.times[keep], positions=tr.positions[keep])
    return replace(scene, tracks=tracks)


@dataclass
class Batcher:
    """Deterministic per-epoch reshuffling into balanced scene batches.

    Batches are as equal in size as possible (at most ``batch_size``) rather
    than leaving one ragged remainder batch: every batch takes a full
    optimizer step, so a tiny trailing batch would inject outsized gradient
    noise.
    """

    scenes: list[Scene]
    batch_size: int
    seed: int

    def epoch(self, epoch_index: int) -> list[list[Scene]]:
        rng = np.random.default_rng(np.random.SeedSequence((self.seed, 104729, epoch_index)))
        order = rng.permutation(len(self.scenes))
        shuffled = [self.scenes[i] for i in order]
        n = len(shuffled)
        k = max(1, -(-n // self.batch_size))
        base, extra = divmod(n, k)
        batches = []
        start = 0
        for i in range(k):
            size = base + (1 if i < extra else 0)
            batches.append(shuffled[start : start + size])
            start += size
        return batches


def split_and_batch(
    scenes: list[Scene], val_fraction: float, batch_size: int, seed: int
) -> tuple[Batcher, list[Scene]]:
    """Seeded split into a reshuffling train batcher and a fixed val set."""
    if not 0.0 <= val_fraction < 1.0:
        raise ConfigError("val_fraction must lie in [0, 1)")
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 7919)))
    order = rng.permutation(len(scenes))
    n_val = int(len(scenes) * val_fraction)
    val = [scenes[i] for i in order[:n_val]]
    train = [scenes[i] for i in order[n_val:]]
    return Batcher(train, batch_size, seed), val
