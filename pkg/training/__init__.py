"""Losses, analytic gradients and the training loop."""

from training.backward import Gradients, LossBreakdown, backward
from training.losses import classification_loss, dr_loss, learning_rate, regularization
from training.trainer import (
    DataSplit,
    EpochOutcome,
    FitResult,
    TrainState,
    fit,
    init_state,
    make_split,
    train_epoch,
)

__all__ = [
    "DataSplit",
    "EpochOutcome",
    "FitResult",
    "Gradients",
    "LossBreakdown",
    "TrainState",
    "backward",
    "classification_loss",
    "dr_loss",
    "fit",
    "init_state",
    "learning_rate",
    "make_split",
    "regularization",
    "train_epoch",
]
