"""Flow-matching core: hand-rolled reverse-mode tape, the CanonLite network,
and the training loop (Adam, EMA, deterministic traces)."""

from . import nets, tape, toydata, training
from .nets import CanonLiteConfig, CanonLiteNet, VectorFieldMLP, canonical_pe
from .tape import Tensor, backward, gradient_check
from .training import (
    FlowModel,
    TrainConfig,
    TrainingDiverged,
    energy_distance,
    integrate_vector_field,
    train,
)

__all__ = [
    "CanonLiteConfig",
    "CanonLiteNet",
    "FlowModel",
    "Tensor",
    "TrainConfig",
    "TrainingDiverged",
    "VectorFieldMLP",
    "backward",
    "canonical_pe",
    "energy_distance",
    "gradient_check",
    "integrate_vector_field",
    "nets",
    "tape",
    "toydata",
    "train",
    "training",
]
