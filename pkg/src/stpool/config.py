"""Run configuration and the flat key=value file format.

Configs are intentionally flat text (``key=value``, ``#`` comments) so
experiment logs diff cleanly. Unset keys fall back to the published training
defaults (hidden 128, batch 128, 50 epochs, lr 0.0003, weight decay 0.0001).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .data_io import ScenarioConfig
from .errors import ConfigError
from .model import ModelConfig
from .representation import FeatureConfig


@dataclass
class TrainConfig:
    batch_size: int = 128
    epochs: int = 50
    lr: float = 3e-4
    weight_decay: float = 1e-4
    seed: int = 0
    val_fraction: float = 0.2
    vehicle_weight: float = 1.0
    pedestrian_weight: float = 2.0
    bicycle_weight: float = 1.0
    unknown_weight: float = 1.0
    dropout_augment: float = 0.0
    variety_samples: int = 6

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size >= 1 and epochs >= 0 required")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ConfigError("lr must be positive, weight_decay nonnegative")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in [0, 1)")
        if not 0.0 <= self.dropout_augment < 1.0:
            raise ConfigError("dropout_augment must lie in [0, 1)")

    def type_weight(self, agent_type: str) -> float:
        return {
            "vehicle": self.vehicle_weight,
            "pedestrian": self.pedestrian_weight,
            "bicycle": self.bicycle_weight,
            "unknown": self.unknown_weight,
        }[agent_type]


@dataclass
class EvalConfig:
    mon_n: int = 6
    horizons: tuple[float, ...] = (1.0, 2.0, 3.0)
    joint_mon: bool = False

    def __post_init__(self):
        if self.mon_n < 1:
            raise ConfigError("mon_n must be >= 1")


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    data: str | None = None


def parse_keyvalues(path) -> dict[str, str]:
    """Read a flat key=value file; '#' starts a comment, blank lines ignored."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = line.split("=", 1)
            key, value = key.strip(), value.strip()
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value
    return out


def _to_bool(value: str) -> bool:
    if value.lower() in ("1", "true", "yes"):
        return True
    if value.lower() in ("0", "false", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


_MODEL_KEYS = {
    "model": ("kind", str),
    "hidden": ("hidden", int),
    "refinements": ("refinements", int),
    "lon_limit": ("lon_limit", float),
    "lat_limit": ("lat_limit", float),
    "history_seconds": ("history_seconds", float),
    "future_steps": ("future_steps", int),
    "dt": ("dt", float),
    "noise_dim": ("noise_dim", int),
    "noise_sigma": ("noise_sigma", float),
    "process_noise": ("process_noise", float),
    "obs_noise": ("obs_noise", float),
}

_TRAIN_KEYS = {
    "batch_size": ("batch_size", int),
    "epochs": ("epochs", int),
    "lr": ("lr", float),
    "weight_decay": ("weight_decay", float),
    "seed": ("seed", int),
    "val_fraction": ("val_fraction", float),
    "vehicle_weight": ("vehicle_weight", float),
    "pedestrian_weight": ("pedestrian_weight", float),
    "bicycle_weight": ("bicycle_weight", float),
    "unknown_weight": ("unknown_weight", float),
    "dropout_augment": ("dropout_augment", float),
    "variety_samples": ("variety_samples", int),
}

_EVAL_KEYS = {
    "mon_n": ("mon_n", int),
    "joint_mon": ("joint_mon", _to_bool),
}


def run_config_from_mapping(kv: dict[str, str], source: str = "<config>") -> RunConfig:
    model_kw: dict = {}
    train_kw: dict = {}
    eval_kw: dict = {}
    data = None
    for key, value in kv.items():
        try:
            if key in _MODEL_KEYS:
                attr, conv = _MODEL_KEYS[key]
                model_kw[attr] = conv(value)
            elif key in _TRAIN_KEYS:
                attr, conv = _TRAIN_KEYS[key]
                train_kw[attr] = conv(value)
            elif key in _EVAL_KEYS:
                attr, conv = _EVAL_KEYS[key]
                eval_kw[attr] = conv(value)
            elif key == "features":
                model_kw["features"] = FeatureConfig.from_names(
                    [f.strip() for f in value.split(",") if f.strip()]
                )
            elif key == "horizons":
                eval_kw["horizons"] = tuple(
                    float(h.strip()) for h in value.split(",") if h.strip()
                )
            elif key == "data":
                data = value
            else:
                raise ConfigError(f"{source}: unknown config key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value for {key!r}: {exc}") from None
    return RunConfig(
        model=ModelConfig(**model_kw),
        train=TrainConfig(**train_kw),
        eval=EvalConfig(**eval_kw),
        data=data,
    )


def load_run_config(path) -> RunConfig:
    return run_config_from_mapping(parse_keyvalues(path), source=str(path))


_SCENARIO_KEYS = {
    "kind": str,
    "n_scenes": int,
    "n_agents_min": int,
    "n_agents_max": int,
    "dt": float,
    "history_steps": int,
    "future_steps": int,
    "noise_sigma": float,
    "dropout_rate": float,
    "seed": int,
}


def scenario_from_mapping(kv: dict[str, str], source: str = "<config>") -> ScenarioConfig:
    kwargs: dict = {}
    for key, value in kv.items():
        if key not in _SCENARIO_KEYS:
            raise ConfigError(f"{source}: unknown scenario key {key!r}")
        try:
            kwargs[key] = _SCENARIO_KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value for {key!r}: {exc}") from None
    return ScenarioConfig(**kwargs)


def load_scenario_config(path) -> ScenarioConfig:
    return scenario_from_mapping(parse_keyvalues(path), source=str(path))


def run_config_to_text(cfg: RunConfig) -> str:
    """Serialize a run config back to the flat key=value format."""
    m, t, e = cfg.model, cfg.train, cfg.eval
    lines = [
        f"model={m.kind}",
        f"hidden={m.hidden}",
        f"refinements={m.refinements}",
        f"features={','.join(m.features.names())}",
        f"lon_limit={m.lon_limit!r}",
        f"lat_limit={m.lat_limit!r}",
        f"history_seconds={m.history_seconds!r}",
        f"future_steps={m.future_steps}",
        f"dt={m.dt!r}",
        f"noise_dim={m.noise_dim}",
        f"noise_sigma={m.noise_sigma!r}",
        f"process_noise={m.process_noise!r}",
        f"obs_noise={m.obs_noise!r}",
        f"batch_size={t.batch_size}",
        f"epochs={t.epochs}",
        f"lr={t.lr!r}",
        f"weight_decay={t.weight_decay!r}",
        f"seed={t.seed}",
        f"val_fraction={t.val_fraction!r}",
        f"vehicle_weight={t.vehicle_weight!r}",
        f"pedestrian_weight={t.pedestrian_weight!r}",
        f"bicycle_weight={t.bicycle_weight!r}",
        f"unknown_weight={t.unknown_weight!r}",
        f"dropout_augment={t.dropout_augment!r}",
        f"variety_samples={t.variety_samples}",
        f"mon_n={e.mon_n}",
        f"horizons={','.join(f'{h:g}' for h in e.horizons)}",
        f"joint_mon={'true' if e.joint_mon else 'false'}",
    ]
    if cfg.data is not None:
        lines.append(f"data={cfg.data}")
    return "\n".join(lines) + "\n"


def with_overrides(cfg: RunConfig, seed: int | None = None, data: str | None = None) -> RunConfig:
    out = cfg
    if seed is not None:
        out = replace(out, train=replace(out.train, seed=seed))
    if data is not None:
        out = replace(out, data=data)
    return out
