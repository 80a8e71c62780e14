"""Trajectory prediction from unified spatio-temporal point sets."""

from .autodiff import Tensor, max_pool_set
from .config import EvalConfig, RunConfig, TrainConfig
from .data_io import ScenarioConfig, generate_synthetic, parse_csv, scenes_from_tracks
from .decoder import DecoderParams, decode_deterministic, decode_stochastic, l2_loss, variety_loss
from .encoder import EncoderParams, batch_st_pooling, st_pooling
from .metrics import MetricReport, ade, fde, mon_metrics, rmse_by_horizon, weighted_sums
from .model import Model, ModelConfig, init_model
from .representation import (
    FeatureConfig,
    PointSet,
    Scene,
    SpatioTemporalPoint,
    Track,
    Trajectory,
    build_point_set,
    derive_velocity,
    filter_range,
    to_reference_frame,
)

__version__ = "0.1.0"

__all__ = [
    "DecoderParams",
    "EncoderParams",
    "EvalConfig",
    "FeatureConfig",
    "MetricReport",
    "Model",
    "ModelConfig",
    "PointSet",
    "RunConfig",
    "ScenarioConfig",
    "Scene",
    "SpatioTemporalPoint",
    "Tensor",
    "Track",
    "TrainConfig",
    "Trajectory",
    "ade",
    "batch_st_pooling",
    "build_point_set",
    "decode_deterministic",
    "decode_stochastic",
    "derive_velocity",
    "fde",
    "filter_range",
    "generate_synthetic",
    "init_model",
    "l2_loss",
    "max_pool_set",
    "mon_metrics",
    "parse_csv",
    "rmse_by_horizon",
    "scenes_from_tracks",
    "st_pooling",
    "to_reference_frame",
    "variety_loss",
    "weighted_sums",
]
