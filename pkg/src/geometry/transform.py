"""Coordinate transformations between an output grid Y and an input grid X.

Every transform works on normalized coordinates (see ``coords``). ``map_inverse``
is the map f^-1 used to resample: it takes output coordinates y to input
coordinates x. Jacobians are reported in input pixels per output pixel, so a
2x upscale has a Jacobian of 1/2 along that axis.
"""

import logging
import math
from typing import Tuple

import numpy as np

from src.geometry.coords import (
    Size,
    in_domain,
    normalized_to_pixel_matrix,
    pixel_to_normalized_matrix,
    to_pixel,
)

MIN_DETERMINANT = 1e-12
SINGULAR_EPS = 1e-12


class TransformError(ValueError):
    pass


class SingularPointError(TransformError):
    pass


class UnsupportedTransformError(TransformError):
    pass


class Transform:
    kind = "transform"
    # longitude seam: normalized u has period 2 on the input side
    wraps_horizontally = False

    def __init__(self, in_size: Size, out_size: Size):
        in_size = (int(in_size[0]), int(in_size[1]))
        out_size = (int(out_size[0]), int(out_size[1]))
        if min(in_size) < 1 or min(out_size) < 1:
            raise TransformError(
                f"Image sizes must be positive, got {in_size} -> {out_size}"
            )
        self.in_size = in_size
        self.out_size = out_size

    def map_inverse(self, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Returns (x, defined); x may fall outside [-1, 1]^2."""
        raise NotImplementedError

    def map_forward(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def analytic_jacobian(self, y: np.ndarray) -> np.ndarray:
        raise UnsupportedTransformError(
            f"No closed-form Jacobian for {self.kind}; use numeric_jacobian_inverse"
        )

    def __repr__(self) -> str:
        return (
            f"{type(self).__name__}(in_size={self.in_size}, out_size={self.out_size})"
        )


class AxisScale(Transform):
    """Per-axis rescaling; in normalized coordinates this is the identity map."""

    kind = "axis-scale"

    @property
    def s_x(self) -> float:
        return self.out_size[1] / self.in_size[1]

    @property
    def s_y(self) -> float:
        return self.out_size[0] / self.in_size[0]

    def map_inverse(self, y):
        y = np.asarray(y, dtype=np.float64)
        return y.copy(), np.ones(y.shape[:-1], dtype=bool)

    def map_forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        return x.copy(), np.ones(x.shape[:-1], dtype=bool)

    def analytic_jacobian(self, y):
        y = np.asarray(y, dtype=np.float64)
        jac = np.zeros(y.shape[:-1] + (2, 2))
        jac[..., 0, 0] = 1.0 / self.s_x
        jac[..., 1, 1] = 1.0 / self.s_y
        return jac

    def as_homography(self) -> "Homography":
        matrix = np.diag([1.0 / self.s_x, 1.0 / self.s_y, 1.0])
        return Homography(matrix, self.in_size, self.out_size)

    def __repr__(self) -> str:
        return (
            f"AxisScale(s_x={self.s_x:.4f}, s_y={self.s_y:.4f}, "
            f"in_size={self.in_size}, out_size={self.out_size})"
        )


class Homography(Transform):
    """Projective map given by a 3x3 matrix on homogeneous output-pixel coordinates.

    The matrix produces input-pixel coordinates, i.e. it is f^-1. It is
    conjugated into normalized coordinates on construction.
    """

    kind = "homography"

    def __init__(self, matrix, in_size: Size, out_size: Size):
        super().__init__(in_size, out_size)
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape != (3, 3):
            raise TransformError(f"Homography matrix must be 3x3, got {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise TransformError("Homography matrix has non-finite entries")
        det = np.linalg.det(matrix)
        if abs(det) <= MIN_DETERMINANT:
            raise TransformError(f"Homography matrix is singular (det={det:.3e})")
        self.matrix = matrix
        self._normalized = (
            pixel_to_normalized_matrix(self.in_size)
            @ matrix
            @ normalized_to_pixel_matrix(self.out_size)
        )
        self._normalized_inv = np.linalg.inv(self._normalized)

    @staticmethod
    def _project(
        matrix: np.ndarray, points: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray]:
        points = np.asarray(points, dtype=np.float64)
        hom = points @ matrix[:, :2].T + matrix[:, 2]
        denom = hom[..., 2]
        defined = np.abs(denom) > SINGULAR_EPS
        safe = np.where(defined, denom, 1.0)
        out = hom[..., :2] / safe[..., None]
        out[~defined] = np.nan
        return out, defined

    def map_inverse(self, y):
        return self._project(self._normalized, y)

    def map_forward(self, x):
        return self._project(self._normalized_inv, x)

    def analytic_jacobian(self, y):
        py = to_pixel(y, self.out_size)
        m = self.matrix
        hom = py @ m[:, :2].T + m[:, 2]
        denom = hom[..., 2]
        px = hom[..., :2] / denom[..., None]
        # d(a.p / c.p)/dp_i = (a_i - x * c_i) / (c.p)
        jac = (m[None, :2, :2] - px[..., :, None] * m[2, :2][None, None, :]) / denom[
            ..., None, None
        ]
        return jac.reshape(py.shape[:-1] + (2, 2))

    def inverted(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix), self.out_size, self.in_size)

    def cropped(self, top: int, left: int, size: Size) -> "Homography":
        """Re-targets the inverse map onto the input window starting at (top, left)."""
        shift = np.array([[1.0, 0.0, -left], [0.0, 1.0, -top], [0.0, 0.0, 1.0]])
        return Homography(shift @ self.matrix, size, self.out_size)

    def __repr__(self) -> str:
        rows = "; ".join(" ".join(f"{v:.6g}" for v in row) for row in self.matrix)
        return f"Homography([{rows}], in_size={self.in_size}, out_size={self.out_size})"


def _rotation_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rotation_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


class ErpPerspective(Transform):
    """Pinhole view extracted from an equirectangular (ERP) panorama.

    Camera axes: x right, y down, z forward. Longitude in [-pi, pi] spans the
    ERP width and latitude in [-pi/2, pi/2] its height (north at the top).
    The view is rotated by yaw about the vertical axis, then by pitch about
    the rotated horizontal axis; positive pitch looks up.
    """

    kind = "erp-perspective"
    wraps_horizontally = True

    def __init__(
        self,
        fov_deg: float,
        yaw_deg: float,
        pitch_deg: float,
        out_size: Size,
        erp_size: Size,
    ):
        super().__init__(erp_size, out_size)
        if not (0.0 < fov_deg < 180.0):
            raise TransformError(
                f"Field of view must be in (0, 180) degrees, got {fov_deg}"
            )
        self.fov_deg = float(fov_deg)
        self.yaw_deg = float(yaw_deg)
        self.pitch_deg = float(pitch_deg)
        self.tan_half = math.tan(math.radians(self.fov_deg) / 2.0)
        self.aspect = self.out_size[0] / self.out_size[1]
        self.rotation = _rotation_y(math.radians(self.yaw_deg)) @ _rotation_x(
            math.radians(self.pitch_deg)
        )

    def map_inverse(self, y):
        y = np.asarray(y, dtype=np.float64)
        rays = np.stack(
            [
                y[..., 0] * self.tan_half,
                y[..., 1] * self.tan_half * self.aspect,
                np.ones(y.shape[:-1]),
            ],
            axis=-1,
        )
        world = rays @ self.rotation.T
        lon = np.arctan2(world[..., 0], world[..., 2])
        lat = np.arctan2(world[..., 1], np.hypot(world[..., 0], world[..., 2]))
        x = np.stack([lon / math.pi, lat / (math.pi / 2.0)], axis=-1)
        return x, np.ones(y.shape[:-1], dtype=bool)

    def map_forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        lon = x[..., 0] * math.pi
        lat = x[..., 1] * (math.pi / 2.0)
        world = np.stack(
            [np.cos(lat) * np.sin(lon), np.sin(lat), np.cos(lat) * np.cos(lon)], axis=-1
        )
        cam = world @ self.rotation
        depth = cam[..., 2]
        # rays behind the view plane have no image
        defined = depth > SINGULAR_EPS
        safe = np.where(defined, depth, 1.0)
        y = np.stack(
            [
                cam[..., 0] / safe / self.tan_half,
                cam[..., 1] / safe / (self.tan_half * self.aspect),
            ],
            axis=-1,
        )
        y[~defined] = np.nan
        return y, defined

    def __repr__(self) -> str:
        return (
            f"ErpPerspective(fov={self.fov_deg}, yaw={self.yaw_deg}, "
            f"pitch={self.pitch_deg}, "
            f"out_size={self.out_size}, erp_size={self.in_size})"
        )


def axis_scale(s_x: float, s_y: float, in_size: Size) -> AxisScale:
    """Upscales an (h, w) input by s_x along the width and s_y along the height."""
    if s_x <= 0 or s_y <= 0:
        raise TransformError(f"Scale factors must be positive, got ({s_x}, {s_y})")
    h, w = in_size
    out_size = (max(1, int(round(h * s_y))), max(1, int(round(w * s_x))))
    if out_size[0] / h != s_y or out_size[1] / w != s_x:
        logging.debug(
            f"Scale ({s_x}, {s_y}) on {in_size} rounds to output {out_size}"
        )
    return AxisScale(in_size, out_size)


def identity(size: Size) -> Homography:
    return Homography(np.eye(3), size, size)


def erp_perspective(
    fov_deg: float, yaw_deg: float, pitch_deg: float, out_size: Size, erp_size: Size
) -> ErpPerspective:
    return ErpPerspective(fov_deg, yaw_deg, pitch_deg, out_size, erp_size)


def apply_inverse(t: Transform, y) -> Tuple[np.ndarray, np.ndarray]:
    """x = f^-1(y) with a validity flag; out-of-domain points are flagged."""
    x, defined = t.map_inverse(y)
    return x, defined & in_domain(x)


def apply_forward(t: Transform, x) -> np.ndarray:
    y, defined = t.map_forward(x)
    if not np.all(defined):
        singular = int(np.size(defined) - np.count_nonzero(defined))
        raise SingularPointError(
            f"{t.kind} forward map is singular at {singular} point(s)"
        )
    return y


def analytic_jacobian_inverse(t: Transform, y) -> np.ndarray:
    return t.analytic_jacobian(y)
