"""Training loop: batched forward, reverse-mode backward, Adam, logging."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, zero_grads
from .baselines import lstm_baseline_encode_batch
from .checkpoint import save_checkpoint
from .config import RunConfig
from .data_io import split_and_batch
from .decoder import rollout, select_min, stepwise_sq_error
from .encoder import batch_st_pooling
from .errors import ConfigError, NumericError
from .model import Model, init_model, parameters
from .optim import AdamState, adam_step
from .pipeline import Prepared, evaluate_prepared, prepare_scenes
from .representation import PointSet, subset_points


@dataclass
class TrainResult:
    model: Model
    log_rows: list[dict]
    best_val_ade: float | None
    final_path: str | None
    best_path: str | None


# One-cycle schedule anchored at the configured initial learning rate: linear
# rise to PEAK_MULT x over the first WARM_FRAC of steps, then cosine anneal to
# END_FRAC x. Desk-scale budgets are a few hundred steps; a constant rate at
# the initial value underfits badly there.
_LR_PEAK_MULT = 3.0
_LR_WARM_FRAC = 0.3
_LR_END_FRAC = 0.1


def _lr_at(step: int, total_steps: int, lr0: float) -> float:
    if total_steps <= 1:
        return lr0
    peak = _LR_PEAK_MULT * lr0
    end = _LR_END_FRAC * lr0
    warm = max(1, int(_LR_WARM_FRAC * total_steps))
    if step < warm:
        return lr0 + (peak - lr0) * step / warm
    frac = (step - warm) / max(1, total_steps - warm)
    return end + (peak - end) * 0.5 * (1.0 + math.cos(math.pi * frac))


def _augment_dropout(ps: PointSet, rate: float, rng: np.random.Generator) -> PointSet:
    keep = [
        i
        for i, p in enumerate(ps.points)
        if p.is_target or rng.random() >= rate
    ]
    return subset_points(ps, keep)


def _batch_loss(model: Model, batch: list[Prepared], cfg: RunConfig, noise_rng) -> Tensor:
    mcfg = model.config
    gt = np.stack([p.gt for p in batch])
    weights = np.array([cfg.train.type_weight(p.agent_type) for p in batch])
    if mcfg.kind == "lstm":
        contexts = lstm_baseline_encode_batch(
            [(p.target_times, p.target_positions) for p in batch], model.baseline
        )
        steps = rollout(contexts, model.baseline.decoder, mcfg.future_steps)
        per_scene = stepwise_sq_error(steps, gt)
    else:
        contexts = batch_st_pooling([p.point_set for p in batch], model.encoder, "train")
        if mcfg.noise_dim == 0:
            steps = rollout(contexts, model.decoder, mcfg.future_steps)
            per_scene = stepwise_sq_error(steps, gt)
        else:
            candidates = []
            for _ in range(cfg.train.variety_samples):
                noise = noise_rng.normal(0.0, mcfg.noise_sigma, (len(batch), mcfg.noise_dim))
                augmented = ad.concat_cols(contexts, Tensor(noise))
                steps = rollout(augmented, model.decoder, mcfg.future_steps)
                candidates.append(stepwise_sq_error(steps, gt))
            per_scene = select_min(candidates)
    return ad.tmean(ad.mul(per_scene, weights))


def _grad_norm(model: Model) -> float:
    total = 0.0
    for p in parameters(model):
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))


def train_model(cfg: RunConfig, scenes, out_dir: str | None = None, verbose: bool = False) -> TrainResult:
    """Train a ``ust`` or ``lstm`` model on the given scenes.

    Writes ``train_log.csv``, ``final.ckpt`` and (when a validation split
    exists) ``best.ckpt`` under ``out_dir``. Fully seeded: identical inputs
    and seed give identical logs and checkpoints.
    """
    if cfg.model.kind not in ("ust", "lstm"):
        raise ConfigError(f"model kind {cfg.model.kind!r} is not trainable")
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    seed = cfg.train.seed
    model = init_model(cfg.model, seed)
    prepared = prepare_scenes(scenes, cfg.model)
    if cfg.model.kind == "ust" and cfg.train.dropout_augment > 0.0:
        clean_sets = [p.point_set for p in prepared]
    else:
        clean_sets = None
    batcher, val = split_and_batch(prepared, cfg.train.val_fraction, cfg.train.batch_size, seed)
    params = parameters(model)
    opt = AdamState(lr=cfg.train.lr, weight_decay=cfg.train.weight_decay)
    steps_per_epoch = len(batcher.epoch(0)) if batcher.scenes else 0
    total_steps = steps_per_epoch * cfg.train.epochs
    log_rows: list[dict] = []
    best_val = None
    best_path = None
    final_path = None
    step = 0
    for epoch in range(cfg.train.epochs):
        epoch_loss = 0.0
        epoch_count = 0
        for i, batch in enumerate(batcher.epoch(epoch)):
            opt.lr = _lr_at(step, total_steps, cfg.train.lr)
            if clean_sets is not None:
                aug_rng = np.random.default_rng(np.random.SeedSequence((seed, 8111, epoch, i)))
                for p in batch:
                    p.point_set = _augment_dropout(p.point_set, cfg.train.dropout_augment, aug_rng)
            noise_rng = np.random.default_rng(np.random.SeedSequence((seed, 6229, epoch, i)))
            loss = _batch_loss(model, batch, cfg, noise_rng)
            step += 1
            if not np.isfinite(loss.data):
                zero_grads(params)
                loss.backward()
                raise NumericError(
                    f"non-finite loss at step {step} (epoch {epoch}): "
                    f"lr={opt.lr}, grad_norm={_grad_norm(model)}"
                )
            zero_grads(params)
            loss.backward()
            adam_step(params, opt)
            epoch_loss += loss.item() * len(batch)
            epoch_count += len(batch)
        if clean_sets is not None:
            for p, ps in zip(prepared, clean_sets):
                p.point_set = ps
        row = {"epoch": epoch, "train_loss": epoch_loss / max(epoch_count, 1)}
        if val:
            report = evaluate_prepared(
                model,
                val,
                mon_n=cfg.eval.mon_n if cfg.model.noise_dim > 0 else None,
                seed=seed,
            )
            row["val_ade"] = report.mon_ade if report.mon_ade is not None else report.overall_ade
            row["val_fde"] = report.mon_fde if report.mon_fde is not None else report.overall_fde
            if out_dir is not None and (best_val is None or row["val_ade"] < best_val):
                best_val = row["val_ade"]
                best_path = os.path.join(out_dir, "best.ckpt")
                save_checkpoint(best_path, model)
        log_rows.append(row)
        if verbose:
            msg = f"epoch {epoch}: train_loss={row['train_loss']:.6f}"
            if "val_ade" in row:
                msg += f" val_ade={row['val_ade']:.4f} val_fde={row['val_fde']:.4f}"
            print(msg)
    if out_dir is not None:
        final_path = os.path.join(out_dir, "final.ckpt")
        save_checkpoint(final_path, model)
        write_train_log(os.path.join(out_dir, "train_log.csv"), log_rows)
    return TrainResult(model, log_rows, best_val, final_path, best_path)


def write_train_log(path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,train_loss,val_ade,val_fde\n")
        for row in rows:
            val_ade = repr(row["val_ade"]) if "val_ade" in row else ""
            val_fde = repr(row["val_fde"]) if "val_fde" in row else ""
            fh.write(f"{row['epoch']},{row['train_loss']!r},{val_ade},{val_fde}\n")
