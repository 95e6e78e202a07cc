from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    GRU,
    BatchNorm,
    Dropout,
    Linear,
    Module,
    MultiHeadAttention,
    ReLU,
    Sigmoid,
    bce_loss,
    gru_cell,
    gru_cell_backward,
    linear_backward,
    linear_forward,
    relu,
    sigmoid,
    softmax,
)
from .optim import AdamState, adam_step

__all__ = [
    "GRU", "BatchNorm", "Dropout", "Linear", "Module", "MultiHeadAttention", "ReLU", "Sigmoid",
    "bce_loss", "gru_cell", "gru_cell_backward", "linear_backward", "linear_forward", "relu",
    "sigmoid", "softmax", "AdamState", "adam_step", "load_checkpoint", "save_checkpoint",
]
