"""Pure-numpy implementations of the hot kernels."""

import numpy as np


def silu(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s


def silu_grad(x, gout):
    s = 1.0 / (1.0 + np.exp(-x))
    return gout * (s * (1.0 + x * (1.0 - s)))


def adam_step(param, grad, m, v, lr, beta1, beta2, eps, bc1, bc2):
    """In-place Adam update with precomputed bias corrections bc1/bc2."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    param -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
