"""Small VGG-style binary CNN: build, run, train, serialize."""

from .network import (
    ModelConfig,
    PRESET_BLOCKS,
    TOY_BLOCKS,
    TrainedModel,
    VGG16_BLOCKS,
    batch_loss,
    build_model,
    forward,
    forward_batch,
    forward_logits,
    layer_plan,
    loss_and_grad,
    param_count,
)
from .serialize import load_weights, save_weights
from .training import EarlyStopping, EpochStats, LabeledImage, TrainConfig, train

__all__ = [
    "EarlyStopping",
    "EpochStats",
    "LabeledImage",
    "ModelConfig",
    "PRESET_BLOCKS",
    "TOY_BLOCKS",
    "TrainConfig",
    "TrainedModel",
    "VGG16_BLOCKS",
    "batch_loss",
    "build_model",
    "forward",
    "forward_batch",
    "forward_logits",
    "layer_plan",
    "load_weights",
    "loss_and_grad",
    "param_count",
    "save_weights",
    "train",
]
