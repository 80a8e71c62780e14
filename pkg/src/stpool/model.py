"""Model assembly: configuration, parameter initialization, naming.

A model is either the set-encoder predictor (``ust``), the target-only LSTM
baseline (``lstm``), the constant-velocity Kalman baseline (``cv``), or the
ground-truth pass-through (``oracle``, a debugging predictor).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .baselines import LstmBaselineParams
from .decoder import DecoderParams
from .encoder import EncoderParams
from .errors import ConfigError
from .representation import FeatureConfig

MODEL_KINDS = ("ust", "lstm", "cv", "oracle")


@dataclass
class ModelConfig:
    kind: str = "ust"
    hidden: int = 128
    refinements: int = 2
    features: FeatureConfig = field(default_factory=FeatureConfig)
    lon_limit: float = 90.0
    lat_limit: float = 15.0
    history_seconds: float = 3.0
    future_steps: int = 6
    dt: float = 0.5
    noise_dim: int = 0
    noise_sigma: float = 1.0
    process_noise: float = 0.1  # cv baseline
    obs_noise: float = 0.05  # cv baseline

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; valid: {', '.join(MODEL_KINDS)}")
        if self.hidden < 1 or self.refinements < 0 or self.future_steps < 1:
            raise ConfigError("hidden >= 1, refinements >= 0, future_steps >= 1 required")
        if self.noise_dim < 0 or self.noise_sigma < 0:
            raise ConfigError("noise_dim and noise_sigma must be nonnegative")
        if self.dt <= 0 or self.history_seconds <= 0:
            raise ConfigError("dt and history_seconds must be positive")

    @property
    def history_steps(self) -> int:
        return int(round(self.history_seconds / self.dt)) + 1


@dataclass
class Model:
    config: ModelConfig
    encoder: EncoderParams | None = None
    decoder: DecoderParams | None = None
    baseline: LstmBaselineParams | None = None


def init_model(config: ModelConfig, seed: int) -> Model:
    rng = np.random.default_rng(np.random.SeedSequence((seed, 551)))
    if config.kind == "ust":
        encoder = EncoderParams.init(
            rng,
            config.features.width,
            hidden=config.hidden,
            refinements=config.refinements,
            feature_scales=config.features.scales(),
        )
        decoder = DecoderParams.init(
            rng, hidden=config.hidden, noise_dim=config.noise_dim, noise_sigma=config.noise_sigma
        )
        return Model(config=config, encoder=encoder, decoder=decoder)
    if config.kind == "lstm":
        return Model(config=config, baseline=LstmBaselineParams.init(rng, hidden=config.hidden))
    return Model(config=config)


def named_parameters(model: Model) -> list[tuple[str, Tensor]]:
    """Trainable tensors in a fixed, checkpoint-stable order."""
    out: list[tuple[str, Tensor]] = []
    if model.encoder is not None:
        for s, stage in enumerate(model.encoder.stages):
            for l, layer in enumerate(stage.layers):
                base = f"encoder.stage{s}.layer{l}"
                out.append((f"{base}.weight", layer.linear.weight))
                out.append((f"{base}.bias", layer.linear.bias))
                out.append((f"{base}.gamma", layer.bn.gamma))
                out.append((f"{base}.beta", layer.bn.beta))
    decoder = model.decoder if model.decoder is not None else (
        model.baseline.decoder if model.baseline is not None else None
    )
    if model.baseline is not None:
        out.append(("baseline.cell.w_x", model.baseline.encoder_cell.w_x))
        out.append(("baseline.cell.w_h", model.baseline.encoder_cell.w_h))
        out.append(("baseline.cell.bias", model.baseline.encoder_cell.bias))
    if decoder is not None:
        out.append(("decoder.init.weight", decoder.init_projection.weight))
        out.append(("decoder.init.bias", decoder.init_projection.bias))
        out.append(("decoder.cell.w_x", decoder.cell.w_x))
        out.append(("decoder.cell.w_h", decoder.cell.w_h))
        out.append(("decoder.cell.bias", decoder.cell.bias))
        out.append(("decoder.out.weight", decoder.output_head.weight))
        out.append(("decoder.out.bias", decoder.output_head.bias))
    return out


def named_buffers(model: Model) -> list[tuple[str, np.ndarray]]:
    """Non-trainable state (batch-norm running statistics)."""
    out: list[tuple[str, np.ndarray]] = []
    if model.encoder is not None:
        for s, stage in enumerate(model.encoder.stages):
            for l, layer in enumerate(stage.layers):
                base = f"encoder.stage{s}.layer{l}"
                out.append((f"{base}.running_mean", layer.bn.running_mean))
                out.append((f"{base}.running_var", layer.bn.running_var))
    return out


def parameters(model: Model) -> list[Tensor]:
    return [t for _, t in named_parameters(model)]
