"""Central finite-difference oracle for the differentiable ops.

Always runs in float64 with step 1e-5; comparisons use max relative error
with an absolute floor for near-zero gradients.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor

FD_STEP = 1e-5
REL_TOL = 1e-4
ABS_FLOOR = 1e-7


def numeric_grad(f: Callable[[], Tensor], x: Tensor, eps: float = FD_STEP) -> np.ndarray:
    """d f() / d x by central differences, perturbing x in place."""
    g = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(f().data)
        flat[i] = orig - eps
        lo = float(f().data)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return g


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.maximum(np.abs(numeric), np.abs(analytic))
    err = np.abs(analytic - numeric)
    rel = np.where(scale < ABS_FLOOR, 0.0, err / np.maximum(scale, ABS_FLOOR))
    return float(rel.max()) if rel.size else 0.0


def check_gradients(
    f: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = FD_STEP
) -> float:
    """Backprop f() once, finite-difference every input, return worst error."""
    for x in inputs:
        x.grad = None
    loss = f()
    loss.backward()
    worst = 0.0
    for x in inputs:
        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        numeric = numeric_grad(f, x, eps)
        worst = max(worst, max_rel_error(analytic, numeric))
    return worst
