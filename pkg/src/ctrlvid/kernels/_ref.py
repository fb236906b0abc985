"""Numpy reference implementations of the hot kernels.

Every function here has a compiled twin in _fast.pyx; the two must agree
to floating-point roundoff. All ops act over the last axis.
"""

import numpy as np

GELU_C = 0.7978845608028654  # sqrt(2/pi)
GELU_A = 0.044715


def softmax_fwd(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_bwd(y: np.ndarray, gout: np.ndarray) -> np.ndarray:
    dot = (gout * y).sum(axis=-1, keepdims=True)
    return y * (gout - dot)


def layer_norm_fwd(x: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Returns (xhat, inv_std); affine is applied by the caller."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    return xc * inv, inv


def layer_norm_bwd(xhat: np.ndarray, inv: np.ndarray, dxhat: np.ndarray) -> np.ndarray:
    n = xhat.shape[-1]
    s1 = dxhat.sum(axis=-1, keepdims=True)
    s2 = (dxhat * xhat).sum(axis=-1, keepdims=True)
    return (inv / n) * (n * dxhat - s1 - xhat * s2)


def gelu_fwd(x: np.ndarray) -> np.ndarray:
    u = GELU_C * (x + GELU_A * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(u))


def gelu_bwd(x: np.ndarray, gout: np.ndarray) -> np.ndarray:
    u = GELU_C * (x + GELU_A * x * x * x)
    t = np.tanh(u)
    du = GELU_C * (1.0 + 3.0 * GELU_A * x * x)
    return gout * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
