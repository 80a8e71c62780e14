"""Command-line interface.

Subcommands: synth, train, eval, predict, ablate, activations.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .activations import (
    SweepGrid,
    dominant_neighbor_type,
    median_neighbor_velocity,
    scene_channel_activations,
    select_channels,
    sweep_field,
    write_field_csv,
    write_scene_csv,
)
from .checkpoint import load_checkpoint
from .config import (
    RunConfig,
    load_run_config,
    load_scenario_config,
    run_config_to_text,
    with_overrides,
)
from .data_io import (
    WindowConfig,
    generate_synthetic,
    parse_csv,
    scenes_from_tracks,
    write_csv,
)
from .errors import ConfigError, DataError, NumericError
from .model import init_model
from .pipeline import evaluate_prepared, predict_prepared, prepare_scenes
from .representation import Scene, Track
from .train import train_model


def _scene_to_tracks(scene: Scene) -> list[Track]:
    """History tracks plus the target's future, merged for CSV output."""
    tracks = []
    for aid in sorted(scene.tracks):
        tr = scene.tracks[aid]
        if aid == scene.target_id:
            tr = replace(
                tr,
                times=np.concatenate([tr.times, scene.future_times]),
                positions=np.concatenate([tr.positions, scene.future_positions]),
            )
        tracks.append(tr)
    return tracks


def resolve_scenes(data: str | None, cfg: RunConfig) -> list[Scene]:
    """Load scenes from a synth directory, a CSV file, or a scenario config."""
    if data is None:
        raise ConfigError("no data source given (use --data or the 'data' config key)")
    if os.path.isdir(data):
        manifest_path = os.path.join(data, "manifest.txt")
        if not os.path.exists(manifest_path):
            raise DataError(f"{data}: no manifest.txt in data directory")
        from .config import parse_keyvalues

        manifest = parse_keyvalues(manifest_path)
        window = WindowConfig(
            history_steps=int(manifest["history_steps"]),
            future_steps=int(manifest["future_steps"]),
            dt=float(manifest["dt"]),
        )
        scenes = []
        for name in manifest["files"].split(","):
            scenes.extend(scenes_from_tracks(parse_csv(os.path.join(data, name)), window))
        return scenes
    if not os.path.exists(data):
        raise DataError(f"data path {data!r} does not exist")
    if data.endswith(".csv"):
        window = WindowConfig(
            history_steps=cfg.model.history_steps,
            future_steps=cfg.model.future_steps,
            dt=cfg.model.dt,
        )
        return scenes_from_tracks(parse_csv(data), window)
    return generate_synthetic(load_scenario_config(data))


def _load_cfg(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    return with_overrides(cfg, seed=args.seed, data=getattr(args, "data", None))


def cmd_synth(args) -> int:
    scenario = load_scenario_config(args.config)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    scenes = generate_synthetic(scenario)
    os.makedirs(args.out, exist_ok=True)
    names = []
    for i, scene in enumerate(scenes):
        name = f"scene_{i:04d}.csv"
        write_csv(os.path.join(args.out, name), _scene_to_tracks(scene))
        names.append(name)
    with open(os.path.join(args.out, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"kind={scenario.kind}\n")
        fh.write(f"seed={scenario.seed}\n")
        fh.write(f"n_scenes={scenario.n_scenes}\n")
        fh.write(f"dt={scenario.dt!r}\n")
        fh.write(f"history_steps={scenario.history_steps}\n")
        fh.write(f"future_steps={scenario.future_steps}\n")
        fh.write(f"files={','.join(names)}\n")
    print(f"wrote {len(names)} scene files to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    scenes = resolve_scenes(cfg.data, cfg)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "run_config.txt"), "w", encoding="utf-8") as fh:
        fh.write(run_config_to_text(cfg))
    result = train_model(cfg, scenes, out_dir=args.out, verbose=True)
    if result.best_val_ade is not None:
        print(f"best val ADE: {result.best_val_ade:.4f}")
    print(f"final checkpoint: {result.final_path}")
    return 0


def _model_for_eval(args, cfg: RunConfig):
    if args.checkpoint:
        return load_checkpoint(args.checkpoint)
    if cfg.model.kind in ("cv", "oracle"):
        return init_model(cfg.model, seed=cfg.train.seed)
    raise ConfigError(
        f"model kind {cfg.model.kind!r} needs --checkpoint (only cv/oracle run without one)"
    )


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    model = _model_for_eval(args, cfg)
    scenes = resolve_scenes(cfg.data, cfg)
    prepared = prepare_scenes(scenes, model.config)
    report = evaluate_prepared(
        model,
        prepared,
        horizons=cfg.eval.horizons,
        mon_n=cfg.eval.mon_n if model.config.noise_dim > 0 else None,
        seed=cfg.train.seed,
        joint_mon=cfg.eval.joint_mon,
    )
    text = report.to_keyvalue_text()
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "metrics.txt"), "w", encoding="utf-8") as fh:
            fh.write(text)
        with open(os.path.join(args.out, "metrics.csv"), "w", encoding="utf-8") as fh:
            for row in report.to_csv_rows():
                fh.write(",".join(row) + "\n")
        print(f"wrote metrics to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_predict(args) -> int:
    cfg = _load_cfg(args)
    model = _model_for_eval(args, cfg)
    scenes = resolve_scenes(cfg.data, cfg)
    prepared = prepare_scenes(scenes, model.config)
    preds, _ = predict_prepared(
        model,
        prepared,
        mon_n=cfg.eval.mon_n if model.config.noise_dim > 0 else None,
        seed=cfg.train.seed,
    )
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "predictions.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("scene_index,step,timestamp,x,y\n")
        for i, (p, traj) in enumerate(zip(prepared, preds)):
            frame = p.scene.frame
            world = frame.invert_positions(traj.positions)
            times = traj.times + frame.t_offset
            for k in range(len(traj)):
                fh.write(
                    f"{i},{k + 1},{float(times[k])!r},"
                    f"{float(world[k, 0])!r},{float(world[k, 1])!r}\n"
                )
    print(f"wrote {path}")
    return 0


ABLATION_AXES = ("features", "refinements", "range")


def cmd_ablate(args) -> int:
    cfg = _load_cfg(args)
    if args.axis not in ABLATION_AXES:
        raise ConfigError(f"unknown ablation axis {args.axis!r}; valid: {', '.join(ABLATION_AXES)}")
    if cfg.train.val_fraction <= 0.0:
        raise ConfigError("ablation needs val_fraction > 0 to report held-out metrics")
    scenes = resolve_scenes(cfg.data, cfg)
    os.makedirs(args.out, exist_ok=True)
    from .representation import FeatureConfig

    rows: list[str] = []
    if args.axis == "features":
        header = "position,time,velocity,ade,fde"
        variants = [
            (FeatureConfig(position=True, velocity=False, agent_type=False, time=False), (1, 0, 0)),
            (FeatureConfig(position=True, velocity=False, agent_type=False, time=True), (1, 1, 0)),
            (FeatureConfig(position=True, velocity=True, agent_type=False, time=True), (1, 1, 1)),
        ]
        for features, flags in variants:
            variant = replace(cfg, model=replace(cfg.model, features=features))
            ade, fde = _train_val_metrics(variant, scenes)
            rows.append(f"{flags[0]},{flags[1]},{flags[2]},{ade!r},{fde!r}")
    elif args.axis == "refinements":
        header = "refinements,ade,fde"
        for r in range(5):
            variant = replace(cfg, model=replace(cfg.model, refinements=r))
            ade, fde = _train_val_metrics(variant, scenes)
            rows.append(f"{r},{ade!r},{fde!r}")
    else:
        header = "longitudinal_range,ade,fde"
        for lon in (90.0, 180.0):
            variant = replace(cfg, model=replace(cfg.model, lon_limit=lon))
            ade, fde = _train_val_metrics(variant, scenes)
            rows.append(f"{lon:g},{ade!r},{fde!r}")
    path = os.path.join(args.out, f"ablate_{args.axis}.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")
    print(f"wrote {path}")
    return 0


def _train_val_metrics(cfg: RunConfig, scenes) -> tuple[float, float]:
    result = train_model(cfg, scenes, out_dir=None)
    last = result.log_rows[-1] if result.log_rows else {}
    if "val_ade" not in last:
        raise ConfigError("training produced no validation metrics (epochs=0?)")
    return last["val_ade"], last["val_fde"]


def cmd_activations(args) -> int:
    cfg = _load_cfg(args)
    if not args.checkpoint:
        raise ConfigError("activations needs --checkpoint")
    model = load_checkpoint(args.checkpoint)
    if model.config.kind != "ust":
        raise ConfigError("activation analysis applies to the set-encoder model only")
    scenes = resolve_scenes(cfg.data, cfg)
    prepared = prepare_scenes(scenes, model.config)
    if args.channels:
        channels = [int(c) for c in args.channels.split(",")]
    else:
        channels = select_channels(model, prepared, n=2)
    os.makedirs(args.out, exist_ok=True)
    grid = SweepGrid(
        x1_min=-model.config.lon_limit,
        x1_max=model.config.lon_limit,
        x2_min=-model.config.lat_limit,
        x2_max=model.config.lat_limit,
        t_min=-model.config.history_seconds,
    )
    field_rows = sweep_field(
        model,
        channels,
        grid=grid,
        probe_velocity=median_neighbor_velocity(prepared),
        probe_type=dominant_neighbor_type(prepared),
    )
    write_field_csv(os.path.join(args.out, "activations_field.csv"), field_rows)
    scene_rows = scene_channel_activations(model, prepared, channels)
    write_scene_csv(os.path.join(args.out, "activations_scenes.csv"), scene_rows)
    print(f"wrote activation CSVs for channels {channels} to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stpool",
        description="Trajectory prediction from spatio-temporal point sets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False, out_required=True):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--data", help="scenario config, CSV file, or synth directory")
        if checkpoint:
            p.add_argument("--checkpoint", help="model checkpoint path")
        if out_required:
            p.add_argument("--out", required=True, help="output directory")
        else:
            p.add_argument("--out", help="output directory (default: print to stdout)")

    p = sub.add_parser("synth", help="generate synthetic scenes as CSV")
    p.add_argument("--config", required=True, help="scenario config file")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or closed-form baseline")
    common(p, checkpoint=True, out_required=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write world-frame predictions")
    common(p, checkpoint=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ablate", help="train/evaluate one model per axis value")
    common(p)
    p.add_argument("--axis", required=True, help="features | refinements | range")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("activations", help="export pooled-channel analyses")
    common(p, checkpoint=True)
    p.add_argument("--channels", help="comma-separated channel indices (default: top variance)")
    p.set_defaults(func=cmd_activations)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
