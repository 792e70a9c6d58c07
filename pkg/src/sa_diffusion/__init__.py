"""Toy-scale diffusion models with a sequence-aware training loss."""

from .errors import ConfigError
from .forward import diffuse, posterior_mean, recover_noise
from .predictor import EmaParams, MLPPredictor, ema_update, embed_time
from .schedule import NoiseSchedule, build_cosine, build_linear, build_schedule, gamma2_product, tau_coefficient
from .training import LossBreakdown, TrainConfig, sa_loss, simple_loss, train, train_step

__all__ = [
    "ConfigError",
    "EmaParams",
    "LossBreakdown",
    "MLPPredictor",
    "NoiseSchedule",
    "TrainConfig",
    "build_cosine",
    "build_linear",
    "build_schedule",
    "diffuse",
    "ema_update",
    "embed_time",
    "gamma2_product",
    "posterior_mean",
    "recover_noise",
    "sa_loss",
    "simple_loss",
    "tau_coefficient",
    "train",
    "train_step",
]
