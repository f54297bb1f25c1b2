import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from src.baselines.classical import BICUBIC, BILINEAR, classical_warp, sample_points
from src.geometry.coords import Size, from_pixel, grid_coords
from src.geometry.derivatives import shape_vector
from src.geometry.sampling import (
    IN_SCALE,
    OUT_OF_SCALE,
    sample_axis_scale,
    sample_homography,
)
from src.geometry.transform import (
    AxisScale,
    Homography,
    Transform,
    TransformError,
    apply_inverse,
    identity,
)
from src.nn.layers import ShapeMismatchError
from src.training.config import TrainConfig
from src.utils.image_io import ImageBuffer

MAX_PAIR_ATTEMPTS = 20


class NoValidCropError(ValueError):
    pass


@dataclass
class TrainSample:
    """Input crop (h, w, 3) with M queries against its ground truth.

    ``x`` are the queries' inverse-mapped coordinates relative to the crop;
    ``skip`` the bilinear samples of the crop at ``x``.
    """

    input: np.ndarray
    y: np.ndarray
    x: np.ndarray
    shape: np.ndarray
    gt: np.ndarray
    skip: np.ndarray
    transform: Transform


@dataclass
class TrainBatch:
    images: np.ndarray
    batch_index: np.ndarray
    x: np.ndarray
    shape: np.ndarray
    skip: np.ndarray
    gt: np.ndarray


def _as_homography(t: Transform) -> Homography:
    if isinstance(t, Homography):
        return t
    if isinstance(t, AxisScale):
        return t.as_homography()
    raise TransformError(
        f"Training pairs need a homography or axis-scale transform, got {t.kind}"
    )


def _valid_crop_origins(mask: np.ndarray, size: Size) -> np.ndarray:
    """Top-left corners of all fully valid (h, w) windows as (K, 2) (top, left) rows."""
    h, w = size
    rows, cols = mask.shape
    if h > rows or w > cols:
        return np.zeros((0, 2), dtype=np.int64)
    table = np.zeros((rows + 1, cols + 1), dtype=np.int64)
    table[1:, 1:] = np.cumsum(np.cumsum(mask.astype(np.int64), axis=0), axis=1)
    counts = table[h:, w:] - table[:-h, w:] - table[h:, :-w] + table[:-h, :-w]
    return np.argwhere(counts == h * w)


def prepare_pair(
    gt_img, t: Transform, cfg: TrainConfig, rng: np.random.Generator
) -> TrainSample:
    """Degrades ``gt_img`` through ``t`` and samples M training queries.

    ``t`` maps the ground-truth grid (its output) onto the degraded input.
    The input is the bicubic warp of the ground truth through the forward
    map, cropped to a window with no void pixels.
    """
    if isinstance(gt_img, ImageBuffer):
        gt = gt_img.pixels
    else:
        gt = np.asarray(gt_img, dtype=np.float64)
    if gt.shape[:2] != t.out_size:
        raise ShapeMismatchError(
            f"Transform produces {t.out_size}, ground truth is {gt.shape[:2]}"
        )
    t = _as_homography(t)
    degraded = classical_warp(gt, t.inverted(), kernel=BICUBIC)

    origins = _valid_crop_origins(degraded.mask, cfg.crop_size)
    if origins.shape[0] == 0:
        raise NoValidCropError(
            f"No void-free {cfg.crop_h}x{cfg.crop_w} window in the "
            f"{degraded.size[1]}x{degraded.size[0]} input"
        )
    top, left = (int(v) for v in origins[rng.integers(origins.shape[0])])
    crop = degraded.pixels[top : top + cfg.crop_h, left : left + cfg.crop_w]
    t_crop = t.cropped(top, left, cfg.crop_size)

    y_all = grid_coords(t_crop.out_size)
    _, in_crop = apply_inverse(t_crop, y_all)
    _, shape_valid = shape_vector(t_crop, y_all)
    candidates = np.flatnonzero(in_crop & shape_valid)
    if candidates.size == 0:
        raise NoValidCropError("No ground-truth pixel maps into the crop")
    chosen = rng.choice(
        candidates, size=cfg.queries, replace=candidates.size < cfg.queries
    )

    if cfg.gt_policy == "pixel-centers":
        y = y_all[chosen]
        gt_rgb = gt.reshape(-1, gt.shape[2])[chosen]
    else:
        # jitter inside the chosen pixel; queries leaving the crop use the center
        out_h, out_w = t_crop.out_size
        pixel = np.stack([chosen % out_w, chosen // out_w], axis=-1)
        pixel = pixel + rng.uniform(0.0, 1.0, (chosen.size, 2))
        y = from_pixel(pixel, t_crop.out_size)
        _, ok = apply_inverse(t_crop, y)
        _, ok_shape = shape_vector(t_crop, y)
        y = np.where((ok & ok_shape)[:, None], y, y_all[chosen])
        gt_rgb = sample_points(gt, y, BILINEAR)

    x, _ = apply_inverse(t_crop, y)
    shape, _ = shape_vector(t_crop, y)
    skip = sample_points(crop, x, BILINEAR)
    return TrainSample(crop, y, x, shape, gt_rgb, skip, t_crop)


def sample_transform(
    gt_size: Size, cfg: TrainConfig, rng: np.random.Generator
) -> Transform:
    """Draws the inverse map for one pair; the ground truth is the output grid."""
    h, w = gt_size
    if cfg.regime == "identity":
        return identity(gt_size)
    if cfg.regime == "fixed-scale":
        in_size = (
            max(1, int(round(h / cfg.fixed_scale))),
            max(1, int(round(w / cfg.fixed_scale))),
        )
        return AxisScale(in_size, gt_size)
    if cfg.regime == "asymmetric-scale":
        return sample_axis_scale(rng, IN_SCALE, gt_size)
    if cfg.regime == "homography-in-scale":
        return sample_homography(rng, IN_SCALE, gt_size)
    return sample_homography(rng, OUT_OF_SCALE, gt_size)


def draw_sample(gt_img, cfg: TrainConfig, rng: np.random.Generator) -> TrainSample:
    """prepare_pair with a fresh transform until a void-free crop exists."""
    gt = gt_img.pixels if isinstance(gt_img, ImageBuffer) else np.asarray(gt_img)
    for attempt in range(MAX_PAIR_ATTEMPTS):
        t = sample_transform(gt.shape[:2], cfg, rng)
        try:
            return prepare_pair(gt, t, cfg, rng)
        except NoValidCropError as e:
            logging.debug(f"Resampling transform (attempt {attempt + 1}): {e}")
    raise NoValidCropError(
        f"No usable {cfg.regime} pair for a {gt.shape[1]}x{gt.shape[0]} image "
        f"after {MAX_PAIR_ATTEMPTS} draws"
    )


def collate(samples: List[TrainSample]) -> TrainBatch:
    return TrainBatch(
        images=np.stack([s.input.transpose(2, 0, 1) for s in samples]),
        batch_index=np.concatenate(
            [np.full(s.x.shape[0], i, dtype=np.int64) for i, s in enumerate(samples)]
        ),
        x=np.concatenate([s.x for s in samples]),
        shape=np.concatenate([s.shape for s in samples]),
        skip=np.concatenate([s.skip for s in samples]),
        gt=np.concatenate([s.gt for s in samples]),
    )


def loss_l1(pred: np.ndarray, gt: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean absolute error and its (sub)gradient w.r.t. ``pred``; 0 at ties."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(
            f"Prediction {pred.shape} and ground truth {gt.shape} differ"
        )
    diff = pred - gt
    loss = float(np.mean(np.abs(diff)))
    grad = (np.sign(diff) / diff.size).astype(pred.dtype, copy=False)
    return loss, grad
