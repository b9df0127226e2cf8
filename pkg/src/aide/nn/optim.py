"""AdamW with decoupled weight decay.

Update per parameter tensor, with t the per-parameter step count:

    m <- b1 m + (1 - b1) g          v <- b2 v + (1 - b2) g^2
    mhat = m / (1 - b1^t)           vhat = v / (1 - b2^t)
    theta <- theta - lr (mhat / (sqrt(vhat) + eps) + wd theta)

With weight_decay=0 this is plain Adam.
"""

from __future__ import annotations

import numpy as np

from ..errors import OptimizerError
from .layers import Param


def adamw_step(param: Param, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.01,
               name="param"):
    g = param.grad
    if not np.all(np.isfinite(g)):
        raise OptimizerError(f"non-finite gradient for {name}")
    t = param.step_count + 1
    param.m *= beta1
    param.m += (1.0 - beta1) * g
    param.v *= beta2
    param.v += (1.0 - beta2) * (g * g)
    mhat = param.m / (1.0 - beta1**t)
    vhat = param.v / (1.0 - beta2**t)
    param.value -= lr * (mhat / (np.sqrt(vhat) + eps) + weight_decay * param.value)
    param.step_count = t


class AdamW:
    """Applies adamw_step to a named parameter dict in insertion order."""

    def __init__(self, params: dict, lr, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.01):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        for name, p in self.params.items():
            adamw_step(p, self.lr, self.beta1, self.beta2, self.eps,
                       self.weight_decay, name=name)
