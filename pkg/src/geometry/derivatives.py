"""Finite-difference Jacobian and Hessian of the inverse map, and the shape vector.

The stencil is the query and its eight neighbours one output pixel away
(offsets of 2/W and 2/H in normalized output coordinates). Differences are
taken in input pixels, so derivatives come out per output pixel. A stencil
only needs f^-1 to be defined at every point; only the query itself has to
land inside the input image.
"""

from typing import Sequence, Tuple

import numpy as np

from src.geometry.transform import Transform

JACOBIAN_SIZE = 4
HESSIAN_SIZE = 6
SHAPE_SIZE = JACOBIAN_SIZE + HESSIAN_SIZE
MIN_ABS_DET = 1e-8


def _stencil(t: Transform, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """f^-1 on the 3x3 neighbourhood; returns xs[m+1][n+1] of shape (3, 3, ..., 2)."""
    y = np.asarray(y, dtype=np.float64)
    out_h, out_w = t.out_size
    step = np.array([2.0 / out_w, 2.0 / out_h])
    xs = np.empty((3, 3) + y.shape, dtype=np.float64)
    defined = np.ones(y.shape[:-1], dtype=bool)
    for m in (-1, 0, 1):
        for n in (-1, 0, 1):
            x, ok = t.map_inverse(y + step * np.array([m, n]))
            xs[m + 1, n + 1] = x
            defined &= ok & np.all(np.isfinite(x), axis=-1)
    return xs, defined


def _difference(t: Transform, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a - b in input pixels; the longitude seam is unwrapped for periodic inputs."""
    delta = a - b
    if t.wraps_horizontally:
        delta[..., 0] = np.mod(delta[..., 0] + 1.0, 2.0) - 1.0
    in_h, in_w = t.in_size
    return delta * np.array([in_w / 2.0, in_h / 2.0])


def _jacobian_from_stencil(t: Transform, xs: np.ndarray) -> np.ndarray:
    d_u = _difference(t, xs[2, 1], xs[0, 1]) / 2.0
    d_v = _difference(t, xs[1, 2], xs[1, 0]) / 2.0
    # jac[..., k, i] = dx_k / dy_i
    return np.stack([d_u, d_v], axis=-1)


def _hessian_from_stencil(t: Transform, xs: np.ndarray) -> np.ndarray:
    center = xs[1, 1]
    h_uu = _difference(t, xs[2, 1], center) - _difference(t, center, xs[0, 1])
    h_vv = _difference(t, xs[1, 2], center) - _difference(t, center, xs[1, 0])
    h_uv = (
        _difference(t, xs[2, 2], xs[2, 0]) - _difference(t, xs[0, 2], xs[0, 0])
    ) / 4.0
    # folded order: (x0: uu, uv, vv), (x1: uu, uv, vv)
    return np.stack(
        [
            h_uu[..., 0],
            h_uv[..., 0],
            h_vv[..., 0],
            h_uu[..., 1],
            h_uv[..., 1],
            h_vv[..., 1],
        ],
        axis=-1,
    )


def numeric_jacobian_inverse(t: Transform, y) -> Tuple[np.ndarray, np.ndarray]:
    """Central-difference Jacobian of f^-1, shape (..., 2, 2), plus stencil validity."""
    xs, defined = _stencil(t, y)
    return _jacobian_from_stencil(t, xs), defined


def numeric_hessian_inverse(t: Transform, y) -> Tuple[np.ndarray, np.ndarray]:
    """Second central differences of f^-1 folded to six entries, plus validity."""
    xs, defined = _stencil(t, y)
    return _hessian_from_stencil(t, xs), defined


def shape_vector(t: Transform, y) -> Tuple[np.ndarray, np.ndarray]:
    """Flattened Jacobian (4) followed by the folded Hessian (6).

    Queries with an undefined stencil or a near-singular Jacobian are flagged
    invalid.
    """
    xs, defined = _stencil(t, y)
    jac = _jacobian_from_stencil(t, xs)
    hess = _hessian_from_stencil(t, xs)
    flat = jac.reshape(jac.shape[:-2] + (JACOBIAN_SIZE,))
    shape = np.concatenate([flat, hess], axis=-1)
    with np.errstate(invalid="ignore"):
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        finite = np.all(np.isfinite(shape), axis=-1)
        valid = defined & finite & (np.abs(det) >= MIN_ABS_DET)
    shape = np.where(valid[..., None], shape, 0.0)
    return shape, valid


def unfold_hessian(folded) -> np.ndarray:
    """Rebuilds the symmetric tensor T[..., i, j, k] = d^2 x_k / dy_i dy_j."""
    folded = np.asarray(folded, dtype=np.float64)
    tensor = np.empty(folded.shape[:-1] + (2, 2, 2))
    for k in range(2):
        tensor[..., 0, 0, k] = folded[..., 3 * k]
        tensor[..., 0, 1, k] = folded[..., 3 * k + 1]
        tensor[..., 1, 0, k] = folded[..., 3 * k + 1]
        tensor[..., 1, 1, k] = folded[..., 3 * k + 2]
    return tensor


def clamp_shape(shape, floor: Sequence[float]) -> np.ndarray:
    """Sign-preserving max(|J|, |floor|) on the Jacobian entries; Hessian untouched."""
    shape = np.array(shape, dtype=np.float64, copy=True)
    floor = np.abs(np.asarray(floor, dtype=np.float64))
    jac = shape[..., :JACOBIAN_SIZE]
    sign = np.where(jac < 0.0, -1.0, 1.0)
    shape[..., :JACOBIAN_SIZE] = sign * np.maximum(np.abs(jac), floor)
    return shape
