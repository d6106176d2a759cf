"""Gradient-descent optimizers over named Param collections.

``step()`` applies one update from the accumulated gradients and then zeroes
them. A non-finite gradient raises TrainingError naming the offending tensor.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from ..errors import TrainingError
from .tape import Param


def _check_grads(params: Mapping[str, Param]) -> None:
    for name, p in params.items():
        if not np.all(np.isfinite(p.grad)):
            bad = int(np.sum(~np.isfinite(p.grad)))
            raise TrainingError(
                f"non-finite gradient in {name!r}: {bad}/{p.grad.size} entries"
            )


class SGD:
    """Plain stochastic gradient descent: p -= lr * grad."""

    def __init__(self, params: Mapping[str, Param], lr: float):
        self.params = dict(params)
        self.lr = float(lr)

    def step(self) -> None:
        _check_grads(self.params)
        for p in self.params.values():
            p.value -= self.lr * p.grad
            p.grad[...] = 0.0


class Adam:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8 defaults)."""

    def __init__(
        self,
        params: Mapping[str, Param],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m = {k: np.zeros_like(p.value) for k, p in self.params.items()}
        self._v = {k: np.zeros_like(p.value) for k, p in self.params.items()}

    def step(self) -> None:
        _check_grads(self.params)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.grad[...] = 0.0


def make_optimizer(kind: str, params: Mapping[str, Param], lr: float) -> SGD | Adam:
    if kind == "adam":
        return Adam(params, lr)
    if kind == "sgd":
        return SGD(params, lr)
    raise ValueError(f"unknown optimizer {kind!r}")
