"""Noise predictors and their training."""

from .batch import Denoiser, GaussianPosteriorDenoiser, SliceBatch
from .checkpoint import load_checkpoint, load_denoiser, save_checkpoint
from .network import NetworkDenoiser, TinyUNet, count_parameters
from .training import (
    Adam,
    TrainConfig,
    apply_contrast_dropout,
    build_model,
    extract_training_slices,
    train,
    training_step,
    weighted_mse,
)

__all__ = [
    "Adam",
    "Denoiser",
    "GaussianPosteriorDenoiser",
    "NetworkDenoiser",
    "SliceBatch",
    "TinyUNet",
    "TrainConfig",
    "apply_contrast_dropout",
    "build_model",
    "count_parameters",
    "extract_training_slices",
    "load_checkpoint",
    "load_denoiser",
    "save_checkpoint",
    "train",
    "training_step",
    "weighted_mse",
]
