"""Random transform samplers for training and evaluation regimes.

Homographies are composed as shear . rotation . scale . projection on output
pixels and map the output grid onto the input grid. The input canvas is the
bounding box of the mapped output rectangle.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from src.geometry.coords import Size
from src.geometry.transform import (
    MIN_DETERMINANT,
    AxisScale,
    Homography,
    TransformError,
)

IN_SCALE = "in-scale"
OUT_OF_SCALE = "out-of-scale"

HOMOGRAPHY_SCALE_RANGES: Dict[str, Tuple[float, float]] = {
    IN_SCALE: (0.35, 0.5),
    OUT_OF_SCALE: (0.125, 0.25),
}
AXIS_SCALE_RANGES: Dict[str, Tuple[float, float]] = {
    IN_SCALE: (0.25, 1.0),
    OUT_OF_SCALE: (0.125, 0.25),
}
SHEAR_RANGE = (-0.25, 0.25)
# rotation is N(0, ROTATION_STD_DEG^2), in degrees
ROTATION_STD_DEG = 0.15
TRANSLATION_RANGE = (-0.75, 0.125)
PROJECTION_RANGE = (-0.6, 0.6)
# the output rectangle must stay on one side of the horizon with margin
MIN_HOMOGENEOUS_DENOMINATOR = 0.25
MAX_ATTEMPTS = 1000


@dataclass(frozen=True)
class HomographyParams:
    h_x: float
    h_y: float
    theta_deg: float
    s_x: float
    s_y: float
    t_x: float
    t_y: float
    p_x: float
    p_y: float


def compose_homography(params: HomographyParams, out_size: Size) -> np.ndarray:
    """Pixel-space matrix of the inverse map.

    Translations are in output pixels. Projection terms are drawn in units of
    the output size and divided by W^2 (H^2) so p . y stays dimensionless.
    """
    out_h, out_w = out_size
    theta = math.radians(params.theta_deg)
    c, s = math.cos(theta), math.sin(theta)
    shear = np.array([[1.0, params.h_x, 0.0], [params.h_y, 1.0, 0.0], [0.0, 0.0, 1.0]])
    rotation = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    scale = np.diag([params.s_x, params.s_y, 1.0])
    projection = np.array(
        [
            [1.0, 0.0, params.t_x],
            [0.0, 1.0, params.t_y],
            [params.p_x / out_w**2, params.p_y / out_h**2, 1.0],
        ]
    )
    return shear @ rotation @ scale @ projection


def sample_homography_params(
    rng: np.random.Generator, regime: str, out_size: Size
) -> HomographyParams:
    if regime not in HOMOGRAPHY_SCALE_RANGES:
        raise TransformError(
            f"Unknown regime {regime!r}, "
            f"expected one of {sorted(HOMOGRAPHY_SCALE_RANGES)}"
        )
    out_h, out_w = out_size
    s_low, s_high = HOMOGRAPHY_SCALE_RANGES[regime]
    return HomographyParams(
        h_x=rng.uniform(*SHEAR_RANGE),
        h_y=rng.uniform(*SHEAR_RANGE),
        theta_deg=rng.normal(0.0, ROTATION_STD_DEG),
        s_x=rng.uniform(s_low, s_high),
        s_y=rng.uniform(s_low, s_high),
        t_x=rng.uniform(TRANSLATION_RANGE[0] * out_w, TRANSLATION_RANGE[1] * out_w),
        t_y=rng.uniform(TRANSLATION_RANGE[0] * out_h, TRANSLATION_RANGE[1] * out_h),
        p_x=rng.uniform(PROJECTION_RANGE[0] * out_w, PROJECTION_RANGE[1] * out_w),
        p_y=rng.uniform(PROJECTION_RANGE[0] * out_h, PROJECTION_RANGE[1] * out_h),
    )


def _output_corners(out_size: Size) -> np.ndarray:
    out_h, out_w = out_size
    return np.array(
        [[0.0, 0.0, 1.0], [out_w, 0.0, 1.0], [0.0, out_h, 1.0], [out_w, out_h, 1.0]]
    )


def fit_input_canvas(matrix: np.ndarray, out_size: Size) -> Homography:
    """Shifts the inverse map so the mapped output starts at input pixel (0, 0)."""
    hom = _output_corners(out_size) @ matrix.T
    corners = hom[:, :2] / hom[:, 2:3]
    low = corners.min(axis=0)
    high = corners.max(axis=0)
    shift = np.array([[1.0, 0.0, -low[0]], [0.0, 1.0, -low[1]], [0.0, 0.0, 1.0]])
    in_w = max(1, int(math.ceil(high[0] - low[0])))
    in_h = max(1, int(math.ceil(high[1] - low[1])))
    return Homography(shift @ matrix, (in_h, in_w), out_size)


def sample_homography(
    rng: np.random.Generator, regime: str, out_size: Size
) -> Homography:
    """Draws an inverse homography; degenerate draws are resampled."""
    for attempt in range(MAX_ATTEMPTS):
        params = sample_homography_params(rng, regime, out_size)
        matrix = compose_homography(params, out_size)
        if abs(np.linalg.det(matrix)) <= MIN_DETERMINANT:
            continue
        denominators = (_output_corners(out_size) @ matrix.T)[:, 2]
        if denominators.min() < MIN_HOMOGENEOUS_DENOMINATOR:
            continue
        if attempt:
            logging.debug(f"Homography accepted after {attempt + 1} draws")
        return fit_input_canvas(matrix, out_size)
    raise TransformError(f"No admissible homography after {MAX_ATTEMPTS} draws")


def sample_axis_scale(
    rng: np.random.Generator, regime: str, out_size: Size
) -> AxisScale:
    """Asymmetric-scale SR: the input is the output shrunk by s_x, s_y per axis."""
    if regime not in AXIS_SCALE_RANGES:
        raise TransformError(
            f"Unknown regime {regime!r}, expected one of {sorted(AXIS_SCALE_RANGES)}"
        )
    out_h, out_w = out_size
    low, high = AXIS_SCALE_RANGES[regime]
    s_x = rng.uniform(low, high)
    s_y = rng.uniform(low, high)
    in_size = (max(1, int(round(out_h * s_y))), max(1, int(round(out_w * s_x))))
    return AxisScale(in_size, out_size)
