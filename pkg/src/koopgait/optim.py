"""Full-batch Adam and gradient clipping, shared by both training phases."""

from __future__ import annotations

import math

import numpy as np


class Adam:
    """Adaptive moment estimation over a dict of named parameter arrays.

    Parameters are updated in place so callers can hand in live references
    (e.g. the coder's weight arrays) and keep using them.
    """

    def __init__(self, params: dict, lr: float = 1e-3,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self._scratch = {k: np.empty_like(v) for k, v in params.items()}

    def step(self, grads: dict) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        # fused bias correction: m_hat / (sqrt(v_hat) + eps) equals
        # sqrt(bc2)/bc1 * m / (sqrt(v) + eps*sqrt(bc2)); all updates go
        # through one scratch buffer so no step allocates
        scale = self.lr * math.sqrt(bc2) / bc1
        eps_hat = self.eps * math.sqrt(bc2)
        for key, param in self.params.items():
            g = grads[key]
            m, v, buf = self.m[key], self.v[key], self._scratch[key]
            np.subtract(g, m, out=buf)
            buf *= 1.0 - self.beta1
            m += buf
            np.multiply(g, g, out=buf)
            buf -= v
            buf *= 1.0 - self.beta2
            v += buf
            np.sqrt(v, out=buf)
            buf += eps_hat
            np.divide(m, buf, out=buf)
            buf *= scale
            param -= buf


def clip_global_norm(grads: dict, max_norm: float) -> float:
    """Scale all gradients in place so their joint L2 norm is <= max_norm;
    returns the pre-clip norm."""
    total = math.sqrt(sum(float(np.dot(g.ravel(), g.ravel()))
                          for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total
