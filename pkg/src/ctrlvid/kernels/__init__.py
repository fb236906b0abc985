"""Kernel backend selection.

The compiled extension is used when it importable; set CTRLVID_BACKEND to
"python" to force the numpy path or "compiled" to require the extension.
"""

import os

import numpy as np

from . import _ref

_choice = os.environ.get("CTRLVID_BACKEND", "auto")
_impl = None
if _choice in ("auto", "compiled"):
    try:
        from . import _fast as _impl
    except ImportError:
        _impl = None
        if _choice == "compiled":
            raise ImportError(
                "CTRLVID_BACKEND=compiled but the ctrlvid.kernels._fast "
                "extension is not built"
            )

BACKEND = "compiled" if _impl is not None else "python"


def _rows(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x).reshape(-1, x.shape[-1])


if _impl is None:
    softmax_fwd = _ref.softmax_fwd
    softmax_bwd = _ref.softmax_bwd
    layer_norm_fwd = _ref.layer_norm_fwd
    layer_norm_bwd = _ref.layer_norm_bwd
    gelu_fwd = _ref.gelu_fwd
    gelu_bwd = _ref.gelu_bwd
else:

    def softmax_fwd(x: np.ndarray) -> np.ndarray:
        x2 = _rows(x)
        out = np.empty_like(x2)
        _impl.softmax_fwd_2d(x2, out)
        return out.reshape(x.shape)

    def softmax_bwd(y: np.ndarray, gout: np.ndarray) -> np.ndarray:
        y2 = _rows(y)
        g2 = _rows(gout)
        gx = np.empty_like(y2)
        _impl.softmax_bwd_2d(y2, g2, gx)
        return gx.reshape(y.shape)

    def layer_norm_fwd(x: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
        x2 = _rows(x)
        xhat = np.empty_like(x2)
        inv = np.empty((x2.shape[0], 1), dtype=x2.dtype)
        _impl.layer_norm_fwd_2d(x2, eps, xhat, inv)
        return xhat.reshape(x.shape), inv.reshape(x.shape[:-1] + (1,))

    def layer_norm_bwd(xhat: np.ndarray, inv: np.ndarray, dxhat: np.ndarray) -> np.ndarray:
        xh2 = _rows(xhat)
        inv2 = np.ascontiguousarray(inv).reshape(-1, 1)
        dx2 = _rows(dxhat)
        gx = np.empty_like(xh2)
        _impl.layer_norm_bwd_2d(xh2, inv2, dx2, gx)
        return gx.reshape(xhat.shape)

    def gelu_fwd(x: np.ndarray) -> np.ndarray:
        flat = np.ascontiguousarray(x).reshape(-1)
        out = np.empty_like(flat)
        _impl.gelu_fwd_1d(flat, out)
        return out.reshape(x.shape)

    def gelu_bwd(x: np.ndarray, gout: np.ndarray) -> np.ndarray:
        flat = np.ascontiguousarray(x).reshape(-1)
        gflat = np.ascontiguousarray(gout).reshape(-1)
        gx = np.empty_like(flat)
        _impl.gelu_bwd_1d(flat, gflat, gx)
        return gx.reshape(x.shape)
