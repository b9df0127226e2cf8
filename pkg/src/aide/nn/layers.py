"""Minimal float64 neural-network layers with explicit backward passes.

Design: forward(x) returns (y, ctx). backward(ctx, dy) returns dx and
accumulates parameter gradients into Param.grad. Nothing here allocates
hidden state on the layer during forward, so inference is safe to run
concurrently; training (which touches .grad) is single threaded.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ArgumentError
from . import kernels


class Param:
    """One trainable tensor plus its gradient and optimizer state."""

    __slots__ = ("value", "grad", "m", "v", "step_count")

    def __init__(self, value):
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)
        self.step_count = 0

    def zero_grad(self):
        self.grad[...] = 0.0


def kaiming_uniform(shape, fan_in, rng) -> np.ndarray:
    """Uniform init on [-sqrt(6 / fan_in), +sqrt(6 / fan_in)]."""
    if fan_in < 1:
        raise ArgumentError(f"fan_in must be positive, got {fan_in}")
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2d:
    """3-D conv over (C, H, W) inputs; weights (O, C, k, k), zero-init bias."""

    def __init__(self, c_in, c_out, ksize, rng, stride=1, pad=0):
        self.stride = stride
        self.pad = pad
        fan_in = c_in * ksize * ksize
        self.weight = Param(kaiming_uniform((c_out, c_in, ksize, ksize), fan_in, rng))
        self.bias = Param(np.zeros(c_out))

    def forward(self, x):
        y = kernels.conv2d_forward(x, self.weight.value, self.bias.value, self.stride, self.pad)
        return y, x

    def backward(self, ctx, dy):
        dx, dw, db = kernels.conv2d_backward(ctx, self.weight.value, dy, self.stride, self.pad)
        self.weight.grad += dw
        self.bias.grad += db
        return dx

    def params(self):
        return {"weight": self.weight, "bias": self.bias}


class Linear:
    """Affine map on the last axis: y = x @ W.T + b."""

    def __init__(self, d_in, d_out, rng):
        self.weight = Param(kaiming_uniform((d_out, d_in), d_in, rng))
        self.bias = Param(np.zeros(d_out))

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.weight.value.shape[1]:
            raise ArgumentError(
                f"input width {x.shape[-1]} does not match weight input "
                f"dim {self.weight.value.shape[1]}"
            )
        return x @ self.weight.value.T + self.bias.value, x

    def backward(self, ctx, dy):
        x = ctx
        d_out = self.weight.value.shape[0]
        dy2 = dy.reshape(-1, d_out)
        x2 = x.reshape(-1, x.shape[-1])
        self.weight.grad += dy2.T @ x2
        self.bias.grad += dy2.sum(axis=0)
        return dy @ self.weight.value

    def params(self):
        return {"weight": self.weight, "bias": self.bias}


class ReLU:
    def forward(self, x):
        return np.maximum(x, 0.0), x

    def backward(self, ctx, dy):
        return dy * (ctx > 0.0)


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


class GELU:
    """Tanh approximation: 0.5 x (1 + tanh(c (x + a x^3)))."""

    def forward(self, x):
        u = _GELU_C * (x + _GELU_A * x**3)
        t = np.tanh(u)
        return 0.5 * x * (1.0 + t), (x, t)

    def backward(self, ctx, dy):
        x, t = ctx
        du = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
        return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


class AvgPool2d:
    """2x2 mean pooling with stride 2; trailing odd rows/cols are dropped."""

    def forward(self, x):
        c, h, w = x.shape
        ho, wo = h // 2, w // 2
        if ho < 1 or wo < 1:
            raise ArgumentError(f"input {h}x{w} too small for 2x2 pooling")
        y = x[:, : 2 * ho, : 2 * wo].reshape(c, ho, 2, wo, 2).mean(axis=(2, 4))
        return y, x.shape

    def backward(self, ctx, dy):
        c, h, w = ctx
        ho, wo = h // 2, w // 2
        dx = np.zeros((c, h, w), dtype=np.float64)
        spread = np.repeat(np.repeat(dy, 2, axis=1), 2, axis=2) * 0.25
        dx[:, : 2 * ho, : 2 * wo] = spread
        return dx


class GlobalAvgPool:
    """Mean over the spatial axes: (C, H, W) -> (C,)."""

    def forward(self, x):
        return x.mean(axis=(1, 2)), x.shape

    def backward(self, ctx, dy):
        c, h, w = ctx
        return np.broadcast_to(dy[:, None, None] / (h * w), (c, h, w)).copy()


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def bce_with_logits(logit: float, label: float):
    """Numerically stable binary cross-entropy on a raw logit.

    Returns (loss, dloss/dlogit). Uses max(z, 0) - z y + log(1 + exp(-|z|)),
    which never exponentiates a large positive value.
    """
    z = float(logit)
    y = float(label)
    if not math.isfinite(z):
        raise ArgumentError(f"logit must be finite, got {z}")
    if not 0.0 <= y <= 1.0:
        raise ArgumentError(f"label must be in [0, 1], got {y}")
    loss = max(z, 0.0) - z * y + math.log1p(math.exp(-abs(z)))
    return loss, sigmoid(z) - y
