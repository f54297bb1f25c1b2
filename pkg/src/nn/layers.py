"""Forward and backward passes for the fixed layer stack.

Tensors are plain numpy arrays: images and feature maps are NCHW, dense
inputs are (..., features). Backward functions take the forward inputs and
the upstream gradient and return gradients in argument order.
"""

from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeMismatchError(ValueError):
    pass


def _check_conv(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> None:
    if x.ndim != 4:
        raise ShapeMismatchError(f"conv3x3 expects NCHW input, got shape {x.shape}")
    if w.ndim != 4 or w.shape[2:] != (3, 3):
        raise ShapeMismatchError(
            f"conv3x3 expects (out, in, 3, 3) weights, got {w.shape}"
        )
    if w.shape[1] != x.shape[1]:
        raise ShapeMismatchError(
            f"conv3x3 weights take {w.shape[1]} channels, input has {x.shape[1]}"
        )
    if b.shape != (w.shape[0],):
        raise ShapeMismatchError(f"conv3x3 bias must be ({w.shape[0]},), got {b.shape}")


def _windows(x: np.ndarray) -> np.ndarray:
    """3x3 neighbourhoods with zero padding, shape (N, C, H, W, 3, 3)."""
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    return sliding_window_view(padded, (3, 3), axis=(2, 3))


def conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Stride-1, padding-1 cross-correlation."""
    _check_conv(x, w, b)
    out = np.tensordot(_windows(x), w, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2)) + b[None, :, None, None]


def conv3x3_grad(
    x: np.ndarray, w: np.ndarray, b: np.ndarray, upstream: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    _check_conv(x, w, b)
    n, _, h, width = x.shape
    if upstream.shape != (n, w.shape[0], h, width):
        raise ShapeMismatchError(
            f"conv3x3 upstream gradient must be {(n, w.shape[0], h, width)}, "
            f"got {upstream.shape}"
        )
    db = upstream.sum(axis=(0, 2, 3))
    dw = np.tensordot(upstream, _windows(x), axes=([0, 2, 3], [0, 2, 3]))
    dpadded = np.zeros(
        (n, x.shape[1], h + 2, width + 2), dtype=np.result_type(x, upstream)
    )
    for i in range(3):
        for j in range(3):
            tap = np.tensordot(w[:, :, i, j], upstream, axes=([0], [1]))
            dpadded[:, :, i : i + h, j : j + width] += tap.transpose(1, 0, 2, 3)
    dx = dpadded[:, :, 1:-1, 1:-1]
    return np.ascontiguousarray(dx), dw, db


def _check_linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> None:
    if w.ndim != 2 or b.shape != (w.shape[0],):
        raise ShapeMismatchError(
            f"linear expects (out, in) weights and (out,) bias, "
            f"got {w.shape}, {b.shape}"
        )
    if x.shape[-1] != w.shape[1]:
        raise ShapeMismatchError(
            f"linear weights take {w.shape[1]} features, input has {x.shape[-1]}"
        )


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_linear(x, w, b)
    return x @ w.T + b


def linear_grad(
    x: np.ndarray, w: np.ndarray, b: np.ndarray, upstream: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    _check_linear(x, w, b)
    flat_x = x.reshape(-1, x.shape[-1])
    flat_up = upstream.reshape(-1, w.shape[0])
    dx = upstream @ w
    dw = flat_up.T @ flat_x
    db = flat_up.sum(axis=0)
    return dx, dw, db


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_grad(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    # relu'(0) = 0
    return upstream * (x > 0)


def sin_pi(x: np.ndarray) -> np.ndarray:
    return np.sin(np.pi * x)


def sin_pi_grad(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return upstream * (np.pi * np.cos(np.pi * x))


def cos_pi(x: np.ndarray) -> np.ndarray:
    return np.cos(np.pi * x)


def cos_pi_grad(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return upstream * (-np.pi * np.sin(np.pi * x))
