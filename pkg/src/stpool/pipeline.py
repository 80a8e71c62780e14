"""Scene preparation and batched prediction/evaluation for all model kinds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .baselines import cv_fit_predict, lstm_baseline_encode_batch
from .decoder import rollout
from .encoder import batch_st_pooling
from .errors import ConfigError
from .metrics import MetricReport, build_report
from .model import Model, ModelConfig
from .representation import (
    PointSet,
    Scene,
    Trajectory,
    build_point_set,
    filter_range,
    to_reference_frame,
)

_EVAL_CHUNK = 512


@dataclass
class Prepared:
    """A normalized scene with everything the predictors consume."""

    scene: Scene  # normalized, frame attached
    point_set: PointSet
    target_times: np.ndarray
    target_positions: np.ndarray  # target history, frame coordinates
    gt: np.ndarray  # [T_f, 2] future, frame coordinates
    agent_type: str


def prepare_scene(scene: Scene, config: ModelConfig) -> Prepared:
    normalized = scene if scene.frame is not None else to_reference_frame(scene)
    if normalized.future_positions.shape[0] != config.future_steps:
        raise ConfigError(
            f"scene has {normalized.future_positions.shape[0]} future steps, "
            f"model expects {config.future_steps}"
        )
    ps = build_point_set(normalized, config.features, config.history_seconds)
    ps = filter_range(ps, config.lon_limit, config.lat_limit)
    target = normalized.target
    return Prepared(
        scene=normalized,
        point_set=ps,
        target_times=target.times,
        target_positions=target.positions,
        gt=normalized.future_positions,
        agent_type=target.agent_type,
    )


def prepare_scenes(scenes: list[Scene], config: ModelConfig) -> list[Prepared]:
    return [prepare_scene(s, config) for s in scenes]


def _ust_contexts(model: Model, point_sets: list[PointSet], mode: str) -> Tensor:
    return batch_st_pooling(point_sets, model.encoder, mode)


def _rollout_trajectories(steps: list[Tensor], dt: float) -> list[Trajectory]:
    times = dt * np.arange(1, len(steps) + 1)
    stacked = np.stack([s.data for s in steps], axis=1)  # [B, T, 2]
    return [Trajectory(times=times, positions=stacked[b]) for b in range(stacked.shape[0])]


def predict_prepared(
    model: Model,
    prepared: list[Prepared],
    mon_n: int | None = None,
    seed: int = 0,
) -> tuple[list[Trajectory], list[list[Trajectory]] | None]:
    """Eval-mode predictions in the target frame.

    Deterministic models return one trajectory per scene. Stochastic models
    (noise_dim > 0) additionally return ``mon_n`` seeded candidates per scene,
    with the mean-candidate slot holding the first candidate.
    """
    cfg = model.config
    preds: list[Trajectory] = []
    samples: list[list[Trajectory]] | None = None
    if cfg.kind == "oracle":
        dtimes = cfg.dt * np.arange(1, cfg.future_steps + 1)
        return [Trajectory(times=dtimes, positions=p.gt.copy()) for p in prepared], None
    if cfg.kind == "cv":
        for p in prepared:
            preds.append(
                cv_fit_predict(
                    p.target_times,
                    p.target_positions,
                    cfg.future_steps,
                    cfg.dt,
                    process_noise=cfg.process_noise,
                    obs_noise=cfg.obs_noise,
                )
            )
        return preds, None
    stochastic = cfg.kind == "ust" and cfg.noise_dim > 0
    if stochastic:
        if mon_n is None or mon_n < 1:
            raise ConfigError("stochastic model evaluation needs mon_n >= 1")
        samples = []
    rng = np.random.default_rng(np.random.SeedSequence((seed, 9371)))
    for lo in range(0, len(prepared), _EVAL_CHUNK):
        chunk = prepared[lo : lo + _EVAL_CHUNK]
        if cfg.kind == "lstm":
            contexts = lstm_baseline_encode_batch(
                [(p.target_times, p.target_positions) for p in chunk], model.baseline
            )
            steps = rollout(contexts, model.baseline.decoder, cfg.future_steps)
            preds.extend(_rollout_trajectories(steps, cfg.dt))
            continue
        contexts = _ust_contexts(model, [p.point_set for p in chunk], "eval")
        if not stochastic:
            steps = rollout(contexts, model.decoder, cfg.future_steps)
            preds.extend(_rollout_trajectories(steps, cfg.dt))
            continue
        b = len(chunk)
        noise = rng.normal(0.0, cfg.noise_sigma, size=(b, mon_n, cfg.noise_dim))
        tiled = np.repeat(contexts.data, mon_n, axis=0)
        augmented = np.concatenate([tiled, noise.reshape(b * mon_n, cfg.noise_dim)], axis=1)
        steps = rollout(Tensor(augmented), model.decoder, cfg.future_steps)
        trajs = _rollout_trajectories(steps, cfg.dt)
        for i in range(b):
            group = trajs[i * mon_n : (i + 1) * mon_n]
            samples.append(group)
            preds.append(group[0])
    return preds, samples


def evaluate_prepared(
    model: Model,
    prepared: list[Prepared],
    horizons=(),
    mon_n: int | None = None,
    seed: int = 0,
    joint_mon: bool = False,
) -> MetricReport:
    preds, samples = predict_prepared(model, prepared, mon_n=mon_n, seed=seed)
    dtimes = model.config.dt * np.arange(1, model.config.future_steps + 1)
    gts = [Trajectory(times=dtimes, positions=p.gt) for p in prepared]
    types = [p.agent_type for p in prepared]
    if samples is not None:
        # MoN replaces the plain point metrics as the headline error.
        return build_report(
            [min(group, key=lambda s: _traj_err(s, g)) for group, g in zip(samples, gts)],
            gts,
            types,
            horizons=horizons,
            sample_sets=samples,
            joint_mon=joint_mon,
        )
    return build_report(preds, gts, types, horizons=horizons)


def _traj_err(a: Trajectory, b: Trajectory) -> float:
    return float(np.mean(np.linalg.norm(a.positions - b.positions, axis=1)))
