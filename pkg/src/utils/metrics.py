import logging
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from src.utils.image_io import ImageBuffer, ImageSizeMismatchError

REPORT_COLUMNS = ["image", "metric", "value", "valid_px"]


def _pixels_of(img) -> np.ndarray:
    pixels = img.pixels if isinstance(img, ImageBuffer) else np.asarray(img)
    return np.asarray(pixels, dtype=np.float64)


def psnr(a, b, mask: Optional[np.ndarray] = None) -> float:
    """10 log10(1 / MSE) over all channels of the (masked) pixels; inf when MSE is 0."""
    pa, pb = _pixels_of(a), _pixels_of(b)
    if pa.shape != pb.shape:
        raise ImageSizeMismatchError(
            f"Cannot compare images of shapes {pa.shape} and {pb.shape}"
        )
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != pa.shape[:2]:
            raise ImageSizeMismatchError(
                f"Mask {mask.shape} does not match images {pa.shape[:2]}"
            )
        pa, pb = pa[mask], pb[mask]
    if pa.size == 0:
        logging.warning("PSNR over an empty pixel set")
        return float("nan")
    mse = float(np.mean((pa - pb) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def masked_psnr(
    a: ImageBuffer, b: ImageBuffer, mask: Optional[np.ndarray] = None
) -> float:
    """mPSNR over the intersection of both images' masks (and ``mask`` if given)."""
    valid = np.asarray(a.mask, dtype=bool) & np.asarray(b.mask, dtype=bool)
    if mask is not None:
        valid = valid & np.asarray(mask, dtype=bool)
    return psnr(a, b, valid)


def metric_report(rows: List[Dict]) -> pd.DataFrame:
    """Rows of image/metric/value/valid_px plus one mean row per metric."""
    report = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    if len(report) > 1:
        means = report.groupby("metric", sort=False).agg(
            value=("value", "mean"), valid_px=("valid_px", "sum")
        )
        means = means.reset_index().assign(image="mean")[REPORT_COLUMNS]
        report = pd.concat([report, means], ignore_index=True)
    return report
