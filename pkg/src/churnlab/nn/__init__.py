"""Small numpy neural-network engine with explicit gradients."""

from .layers import LSTM, Dense, bce_loss, hard_sigmoid, hard_sigmoid_grad, sigmoid
from .optim import AdamState, adam_step
from .training import History, NumericalError, TrainConfig, stratified_split, train

__all__ = [
    "LSTM",
    "Dense",
    "bce_loss",
    "hard_sigmoid",
    "hard_sigmoid_grad",
    "sigmoid",
    "AdamState",
    "adam_step",
    "History",
    "NumericalError",
    "TrainConfig",
    "stratified_split",
    "train",
]
