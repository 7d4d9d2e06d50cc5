"""Adam with bias correction."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from ..errors import ContractError
from .tensor import Tensor


class AdamState:
    """First/second moments for a fixed set of named parameters.

    Updates are applied in place to ``Tensor.data``.
    """

    def __init__(self, params: Mapping[str, Tensor], lr: float = 2e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray]) -> None:
        for k, p in params.items():
            if k not in self.m or self.m[k].shape != p.shape:
                raise ContractError(f"Adam state has no moments matching parameter {k!r} {p.shape}")
            if grads[k].shape != p.shape:
                raise ContractError(f"gradient for {k!r} has shape {grads[k].shape}, parameter {p.shape}")
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for k, p in params.items():
            g = grads[k]
            m = self.m[k]
            v = self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data -= update.astype(p.dtype, copy=False)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for k in self.m:
            out[f"adam.m.{k}"] = self.m[k]
            out[f"adam.v.{k}"] = self.v[k]
        return out


def adam_step(state: AdamState, params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray]) -> Mapping[str, Tensor]:
    state.step(params, grads)
    return params
