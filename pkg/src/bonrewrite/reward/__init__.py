"""Outcome-supervised reward model: encoder, scorer, loss, training, checkpoints."""

from .checkpoint import dump_model, load_model, parse_model, save_model
from .encoder import EncodedPair, EncoderConfig, encode, encode_matrix
from .model import (
    RewardGradient,
    RewardModel,
    init_model,
    loss_gradient,
    ranking_loss,
    score,
    total_loss,
)
from .training import TrainingConfig, lr_multiplier, train

__all__ = [
    "EncodedPair",
    "EncoderConfig",
    "RewardGradient",
    "RewardModel",
    "TrainingConfig",
    "dump_model",
    "encode",
    "encode_matrix",
    "init_model",
    "load_model",
    "loss_gradient",
    "lr_multiplier",
    "parse_model",
    "ranking_loss",
    "save_model",
    "score",
    "total_loss",
    "train",
]
