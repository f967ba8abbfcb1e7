"""Tensor primitives for the inference engine.

Everything works on channels-last float32 arrays (N, H, W, C).  The 3x3
convolution goes through im2col so the bulk of the work lands in one
BLAS matmul.  The depthwise convolution is a plain loop nest compiled
with numba (the channel axis is contiguous, so the inner strip
vectorizes and each pixel's nine taps stay in L1); a shifted-slice
numpy path backs it when numba is unavailable.  Spatial padding is
zero, "same" size.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the _numpy path
    HAVE_NUMBA = False


class ShapeError(ValueError):
    """Tensor shapes violate the layer contract."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeError(msg)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def conv2d_3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross-correlation with a 3x3 kernel, zero padding, bias add.

    x: (N, H, W, Cin), w: (3, 3, Cin, Cout), b: (Cout,).
    """
    _require(x.ndim == 4, f"conv3x3 input must be NHWC, got {x.shape}")
    n, h, wd, cin = x.shape
    _require(w.shape[:3] == (3, 3, cin), f"conv3x3 weight {w.shape} vs Cin {cin}")
    cout = w.shape[3]
    _require(b.shape == (cout,), f"conv3x3 bias {b.shape} vs Cout {cout}")

    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * wd, 9 * cin)
    out = cols @ w.reshape(9 * cin, cout)
    out += b
    return out.reshape(n, h, wd, cout)


if HAVE_NUMBA:
    @njit(cache=True)
    def _dw3x3_kernel(xp, w, b, out):
        n, h2, w2, c = xp.shape
        for bi in range(n):
            for i in range(h2 - 2):
                for j in range(w2 - 2):
                    for ci in range(c):
                        out[bi, i, j, ci] = b[ci]
                    for ky in range(3):
                        for kx in range(3):
                            for ci in range(c):
                                out[bi, i, j, ci] += \
                                    xp[bi, i + ky, j + kx, ci] * w[ky, kx, ci]


def _depthwise_numpy(x, w, b):
    n, h, wd, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.zeros_like(x)
    for ky in range(3):
        for kx in range(3):
            out += xp[:, ky:ky + h, kx:kx + wd, :] * w[ky, kx]
    out += b
    return out


def depthwise_conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-channel 3x3 cross-correlation.  w: (3, 3, C), b: (C,)."""
    _require(x.ndim == 4, f"depthwise input must be NHWC, got {x.shape}")
    n, h, wd, c = x.shape
    _require(w.shape == (3, 3, c), f"depthwise weight {w.shape} vs C {c}")
    _require(b.shape == (c,), f"depthwise bias {b.shape} vs C {c}")

    if not HAVE_NUMBA:
        return _depthwise_numpy(x, w, b)
    xp = np.zeros((n, h + 2, wd + 2, c), dtype=np.float32)
    xp[:, 1:-1, 1:-1, :] = x
    out = np.empty_like(x)
    _dw3x3_kernel(xp, np.ascontiguousarray(w, dtype=np.float32),
                  np.ascontiguousarray(b, dtype=np.float32), out)
    return out


def pointwise_conv(x: np.ndarray, w: np.ndarray, b: np.ndarray,
                   stride: int = 1) -> np.ndarray:
    """1x1 channel mixing, optional spatial stride.  w: (Cin, Cout)."""
    _require(x.ndim == 4, f"pointwise input must be NHWC, got {x.shape}")
    _require(w.ndim == 2 and w.shape[0] == x.shape[3],
             f"pointwise weight {w.shape} vs Cin {x.shape[3]}")
    _require(b.shape == (w.shape[1],), f"pointwise bias {b.shape}")
    if stride != 1:
        x = x[:, ::stride, ::stride, :]
    out = x @ w
    out += b
    return out


def depthwise_separable(x: np.ndarray, dw_w: np.ndarray, dw_b: np.ndarray,
                        pw_w: np.ndarray, pw_b: np.ndarray) -> np.ndarray:
    """Depthwise 3x3 followed by pointwise 1x1 mixing."""
    return pointwise_conv(depthwise_conv3x3(x, dw_w, dw_b), pw_w, pw_b)


def maxpool2x2(x: np.ndarray) -> np.ndarray:
    """2x2 max pooling, stride 2.  H and W must be even."""
    n, h, w, c = x.shape
    _require(h % 2 == 0 and w % 2 == 0, f"maxpool needs even H, W, got {x.shape}")
    top = np.maximum(x[:, 0::2, 0::2, :], x[:, 0::2, 1::2, :])
    bottom = np.maximum(x[:, 1::2, 0::2, :], x[:, 1::2, 1::2, :])
    return np.maximum(top, bottom)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """(N, H, W, C) -> (N, C) spatial mean."""
    return x.mean(axis=(1, 2))


def dense(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map.  x: (N, K), w: (K, M), b: (M,)."""
    _require(x.ndim == 2 and w.ndim == 2 and x.shape[1] == w.shape[0],
             f"dense shapes {x.shape} @ {w.shape}")
    _require(b.shape == (w.shape[1],), f"dense bias {b.shape}")
    return x @ w + b


def softmax(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax, numerically stable for all finite logits."""
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)
