"""Normalized image coordinates.

Coordinates are stored as arrays of shape (..., 2) holding (u, v): u runs
along the width, v along the height. The center of pixel i on an N-pixel axis
sits at -1 + (2i + 1) / N, so the image edges are at -1 and 1. Pixel space is
[0, w) x [0, h) with the center of pixel i at i + 0.5.
"""

from typing import Tuple

import numpy as np

Size = Tuple[int, int]


def pixel_centers(n: int) -> np.ndarray:
    return -1.0 + (2.0 * np.arange(n) + 1.0) / n


def grid_coords(size: Size) -> np.ndarray:
    """Normalized centers of all pixels of an (h, w) image, row-major, (h*w, 2)."""
    h, w = size
    v, u = np.meshgrid(pixel_centers(h), pixel_centers(w), indexing="ij")
    return np.stack([u.ravel(), v.ravel()], axis=-1)


def to_pixel(coords: np.ndarray, size: Size) -> np.ndarray:
    h, w = size
    scale = np.array([w / 2.0, h / 2.0])
    return (np.asarray(coords, dtype=np.float64) + 1.0) * scale


def from_pixel(points: np.ndarray, size: Size) -> np.ndarray:
    h, w = size
    scale = np.array([2.0 / w, 2.0 / h])
    return np.asarray(points, dtype=np.float64) * scale - 1.0


def to_cell_index(coords: np.ndarray, size: Size) -> np.ndarray:
    """Continuous pixel index with centers on integers (u -> column, v -> row)."""
    return to_pixel(coords, size) - 0.5


def in_domain(coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords)
    with np.errstate(invalid="ignore"):
        return np.all(np.abs(coords) <= 1.0, axis=-1)


def pixel_to_normalized_matrix(size: Size) -> np.ndarray:
    """3x3 matrix taking homogeneous pixel coordinates to normalized ones."""
    h, w = size
    return np.array(
        [[2.0 / w, 0.0, -1.0], [0.0, 2.0 / h, -1.0], [0.0, 0.0, 1.0]], dtype=np.float64
    )


def normalized_to_pixel_matrix(size: Size) -> np.ndarray:
    h, w = size
    return np.array(
        [[w / 2.0, 0.0, w / 2.0], [0.0, h / 2.0, h / 2.0], [0.0, 0.0, 1.0]],
        dtype=np.float64,
    )
