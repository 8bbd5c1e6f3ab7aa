"""Siamese metric learning: losses, training, transfer and evaluation."""

from .evaluate import EvalReport, default_thresholds, evaluate, evaluate_distances, evaluate_pairs, far_frr
from .losses import (
    LossConfig,
    contrastive_loss,
    cross_entropy_pair_loss,
    distance,
    joint_loss,
    pair_probability,
)
from .siamese import SiameseModel
from .train import TrainConfig, epochs_to_reach, train
from .transfer import StructureMismatchError, transfer_init

__all__ = [
    "EvalReport", "LossConfig", "SiameseModel", "StructureMismatchError", "TrainConfig",
    "contrastive_loss", "cross_entropy_pair_loss", "default_thresholds", "distance",
    "epochs_to_reach", "evaluate", "evaluate_distances", "evaluate_pairs", "far_frr", "joint_loss",
    "pair_probability", "train", "transfer_init",
]
