"""Small numpy network stack: layers with exact backward passes and Adam."""

from .layers import (BatchNorm2d, Conv2d, Dense, Flatten, Layer, LeakyReLU, Param, ReLU,
                     Residual, Scale, Sequential, Sigmoid, Tanh, Upsample2x)
from .ops import bce_loss, mse_loss
from .optim import Adam, AdamState, adam_step

__all__ = [
    "Adam", "AdamState", "BatchNorm2d", "Conv2d", "Dense", "Flatten", "Layer", "LeakyReLU",
    "Param", "ReLU", "Residual", "Scale", "Sequential", "Sigmoid", "Tanh", "Upsample2x",
    "adam_step", "bce_loss", "mse_loss",
]
