"""Inverse-mapping warps with separable bilinear and bicubic kernels."""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from src.geometry.coords import Size, grid_coords, to_cell_index
from src.geometry.transform import Transform, apply_inverse
from src.utils.image_io import ImageBuffer, ImageSizeMismatchError

# sample positions closer than this to a node are snapped onto it
NODE_SNAP = 1e-9
KEYS_A = -0.5


def keys_cubic(distance: np.ndarray, a: float = KEYS_A) -> np.ndarray:
    d = np.abs(distance)
    near = ((a + 2.0) * d - (a + 3.0)) * d * d + 1.0
    far = ((a * d - 5.0 * a) * d + 8.0 * a) * d - 4.0 * a
    return np.where(d <= 1.0, near, np.where(d < 2.0, far, 0.0))


@dataclass(frozen=True)
class Kernel1D:
    kind: str
    offsets: Tuple[int, ...]

    @property
    def support(self) -> int:
        return len(self.offsets)

    def weights(self, frac: np.ndarray) -> np.ndarray:
        """Tap weights for fractional positions in [0, 1), shape (..., support)."""
        frac = np.asarray(frac, dtype=np.float64)[..., None]
        offsets = np.array(self.offsets, dtype=np.float64)
        if self.kind == "bilinear":
            return np.maximum(1.0 - np.abs(frac - offsets), 0.0)
        return keys_cubic(frac - offsets)


BILINEAR = Kernel1D("bilinear", (0, 1))
BICUBIC = Kernel1D("bicubic", (-1, 0, 1, 2))
KERNELS = {"bilinear": BILINEAR, "bicubic": BICUBIC}


def get_kernel(kernel: Union[str, Kernel1D]) -> Kernel1D:
    if isinstance(kernel, Kernel1D):
        return kernel
    try:
        return KERNELS[kernel]
    except KeyError:
        raise ValueError(
            f"Unknown kernel {kernel!r}, expected one of {sorted(KERNELS)}"
        ) from None


def _axis_taps(position: np.ndarray, n: int, kernel: Kernel1D, wrap: bool):
    nearest = np.round(position)
    position = np.where(np.abs(position - nearest) < NODE_SNAP, nearest, position)
    base = np.floor(position)
    weights = kernel.weights(position - base)
    offsets = np.array(kernel.offsets, dtype=np.int64)
    indices = base.astype(np.int64)[..., None] + offsets
    if wrap:
        indices = np.mod(indices, n)
    else:
        # clamp-to-edge supplies taps outside the image
        indices = np.clip(indices, 0, n - 1)
    return indices, weights


def sample_points(
    pixels: np.ndarray,
    coords: np.ndarray,
    kernel: Union[str, Kernel1D] = BILINEAR,
    wrap: bool = False,
) -> np.ndarray:
    """Interpolates an (h, w, c) image at normalized coordinates of shape (Q, 2)."""
    kernel = get_kernel(kernel)
    h, w = pixels.shape[:2]
    cells = to_cell_index(coords, (h, w))
    cols, col_weights = _axis_taps(cells[:, 0], w, kernel, wrap)
    rows, row_weights = _axis_taps(cells[:, 1], h, kernel, False)
    out = np.zeros((coords.shape[0], pixels.shape[2]), dtype=np.float64)
    for a in range(kernel.support):
        row = np.zeros_like(out)
        for b in range(kernel.support):
            row += col_weights[:, b, None] * pixels[rows[:, a], cols[:, b]]
        out += row_weights[:, a, None] * row
    return out


def _pixels_of(img) -> np.ndarray:
    pixels = img.pixels if isinstance(img, ImageBuffer) else np.asarray(img)
    return np.asarray(pixels, dtype=np.float64)


def valid_mask(
    t: Transform, out_size: Optional[Size] = None, in_size: Optional[Size] = None
) -> np.ndarray:
    """Output pixels whose inverse-mapped center lands inside the input image."""
    out_size = tuple(out_size) if out_size is not None else t.out_size
    if out_size != t.out_size:
        raise ImageSizeMismatchError(
            f"Transform produces {t.out_size}, requested {out_size}"
        )
    if in_size is not None and tuple(in_size) != t.in_size:
        raise ImageSizeMismatchError(
            f"Transform reads {t.in_size}, image is {tuple(in_size)}"
        )
    _, valid = apply_inverse(t, grid_coords(out_size))
    return valid.reshape(out_size)


def classical_warp(
    img,
    t: Transform,
    out_size: Optional[Size] = None,
    kernel: Union[str, Kernel1D] = BICUBIC,
) -> ImageBuffer:
    kernel = get_kernel(kernel)
    pixels = _pixels_of(img)
    if pixels.shape[:2] != t.in_size:
        raise ImageSizeMismatchError(
            f"Transform reads {t.in_size}, image is {pixels.shape[:2]}"
        )
    out_size = tuple(out_size) if out_size is not None else t.out_size
    if out_size != t.out_size:
        raise ImageSizeMismatchError(
            f"Transform produces {t.out_size}, requested {out_size}"
        )

    x, valid = apply_inverse(t, grid_coords(out_size))
    out = np.zeros((out_size[0] * out_size[1], pixels.shape[2]), dtype=np.float64)
    if np.any(valid):
        samples = sample_points(pixels, x[valid], kernel, wrap=t.wraps_horizontally)
        out[valid] = np.clip(samples, 0.0, 1.0)
    logging.debug(
        f"{kernel.kind} warp {t!r}: {int(valid.sum())}/{valid.size} valid pixels"
    )
    return ImageBuffer(
        out.reshape(out_size + (pixels.shape[2],)), valid.reshape(out_size)
    )
