from .tensor import (
    LAYER_NORM_EPS,
    Parameter,
    Tensor,
    add,
    concat,
    embedding_lookup,
    gelu,
    grad_enabled,
    layer_norm,
    masked_cross_entropy,
    matmul,
    mul,
    narrow,
    no_grad,
    reshape,
    scale,
    softmax,
    transpose,
)
from .optim import AdamW
from . import gradcheck

__all__ = [
    "LAYER_NORM_EPS",
    "Parameter",
    "Tensor",
    "AdamW",
    "add",
    "concat",
    "embedding_lookup",
    "gelu",
    "grad_enabled",
    "gradcheck",
    "layer_norm",
    "masked_cross_entropy",
    "matmul",
    "mul",
    "narrow",
    "no_grad",
    "reshape",
    "scale",
    "softmax",
    "transpose",
]
