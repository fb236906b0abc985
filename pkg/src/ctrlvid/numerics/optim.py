"""Decoupled-weight-decay Adam over named Parameters.

Moment state is keyed by parameter name so it survives checkpointing; the
optimizer updates exactly the parameters it is handed and nothing else --
the training stage decides which group that is.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from ..errors import ConfigError
from .tensor import Parameter


class AdamW:
    def __init__(
        self,
        lr: float,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: Iterable[Parameter]) -> None:
        b1, b2 = self.betas
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - b1**t
        bc2 = 1.0 - b2**t
        for p in params:
            g = p.tensor.grad
            if g is None:
                g = np.zeros_like(p.data)
            arr = p.tensor.data
            if self.weight_decay:
                arr *= 1.0 - self.lr * self.weight_decay
            m = self._m.get(p.name)
            if m is None:
                m = self._m[p.name] = np.zeros_like(p.data)
                self._v[p.name] = np.zeros_like(p.data)
            v = self._v[p.name]
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            arr -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self, params: Iterable[Parameter]) -> None:
        for p in params:
            p.tensor.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flat dict for checkpointing: moments plus the step counter."""
        out: dict[str, np.ndarray] = {"__step__": np.asarray([self.step_count])}
        for k, m in self._m.items():
            out[f"m::{k}"] = m
            out[f"v::{k}"] = self._v[k]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.step_count = int(arrays["__step__"][0])
        self._m = {k[3:]: v.copy() for k, v in arrays.items() if k.startswith("m::")}
        self._v = {k[3:]: v.copy() for k, v in arrays.items() if k.startswith("v::")}
