"""Minimal neural substrate: layers, reverse-mode gradients, SGD, checkpoints."""

from . import functional
from .checkpoint import (
    checkpoint_bytes,
    content_hash,
    load_checkpoint,
    save_checkpoint,
)
from .functional import softmax, softmax_cross_entropy, softmax_cross_entropy_grad
from .gradcheck import check_model_gradients, max_relative_error, numeric_gradient
from .layers import (
    Conv2d,
    Dense,
    GlobalAvgPool,
    Layer,
    MaxPool2d,
    Parameter,
    ReLU,
    Sequential,
    he_normal,
    layer_from_spec,
)
from .optim import SgdMomentum, sgd_step
from .rng import RNG_ALGORITHM, make_rng, rng_metadata, spawn_rng

__all__ = [
    "functional",
    "checkpoint_bytes",
    "content_hash",
    "load_checkpoint",
    "save_checkpoint",
    "softmax",
    "softmax_cross_entropy",
    "softmax_cross_entropy_grad",
    "check_model_gradients",
    "max_relative_error",
    "numeric_gradient",
    "Conv2d",
    "Dense",
    "GlobalAvgPool",
    "Layer",
    "MaxPool2d",
    "Parameter",
    "ReLU",
    "Sequential",
    "he_normal",
    "layer_from_spec",
    "SgdMomentum",
    "sgd_step",
    "RNG_ALGORITHM",
    "make_rng",
    "rng_metadata",
    "spawn_rng",
]
