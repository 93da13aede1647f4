"""Adam with bias correction, backed by the kernel module."""

import numpy as np

from . import kernels


class Adam:
    """Standard Adam over a list of parameter tensors.

    Moments live per parameter; ``step`` applies one bias-corrected update
    and clears the gradients afterwards.
    """

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ValueError(f"parameter {i} has no gradient; run backward first")
        self.step_count += 1
        for p, m, v in zip(self.params, self.m, self.v):
            kernels.adam_step(
                p.data, p.grad, m, v, self.step_count,
                self.lr, self.beta1, self.beta2, self.eps,
            )
        self.zero_grad()

    def zero_grad(self):
        for p in self.params:
            p.grad = None
