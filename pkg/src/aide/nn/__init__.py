"""From-scratch float64 NN stack: layers, loss, optimizer, grad checking."""

from .gradcheck import GradCheckResult, grad_check
from .kernels import backend_name, conv2d_backward, conv2d_forward
from .layers import (
    GELU,
    AvgPool2d,
    Conv2d,
    GlobalAvgPool,
    Linear,
    Param,
    ReLU,
    bce_with_logits,
    kaiming_uniform,
    sigmoid,
)
from .optim import AdamW, adamw_step

__all__ = [
    "AdamW",
    "AvgPool2d",
    "Conv2d",
    "GELU",
    "GlobalAvgPool",
    "GradCheckResult",
    "Linear",
    "Param",
    "ReLU",
    "adamw_step",
    "backend_name",
    "bce_with_logits",
    "conv2d_backward",
    "conv2d_forward",
    "grad_check",
    "kaiming_uniform",
    "sigmoid",
]
