import math

import numpy as np
import pytest

from src.utils.image_io import ImageBuffer, ImageSizeMismatchError
from src.utils.metrics import REPORT_COLUMNS, masked_psnr, metric_report, psnr


def test_identical_images_give_infinity(random_image):
    assert psnr(random_image, random_image) == math.inf


def test_uniform_difference_closed_form():
    a = np.full((8, 8, 3), 0.5)
    assert psnr(a, a + 0.01) == pytest.approx(40.0, abs=1e-9)
    for delta in (0.1, 0.003, 0.25):
        assert psnr(a, a - delta) == pytest.approx(-20.0 * math.log10(delta), abs=1e-9)


def test_psnr_is_symmetric(rng):
    a, b = rng.uniform(size=(2, 6, 5, 3))
    assert psnr(a, b) == psnr(b, a)


def test_size_mismatch():
    with pytest.raises(ImageSizeMismatchError):
        psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))
    with pytest.raises(ImageSizeMismatchError):
        psnr(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)), mask=np.ones((3, 3), dtype=bool))


def test_masked_pixels_never_affect_mpsnr(rng):
    gt = rng.uniform(size=(10, 10, 3))
    pred = np.clip(gt + rng.normal(0.0, 0.05, gt.shape), 0.0, 1.0)
    mask = rng.uniform(size=(10, 10)) > 0.3
    truth = ImageBuffer(gt, np.ones((10, 10)))
    reference = masked_psnr(truth, ImageBuffer(pred, mask))
    for _ in range(5):
        garbage = pred.copy()
        garbage[~mask] = rng.uniform(size=(int((~mask).sum()), 3))
        assert masked_psnr(truth, ImageBuffer(garbage, mask)) == reference


def test_mpsnr_uses_the_mask_intersection():
    a = np.zeros((2, 2, 3))
    b = np.zeros((2, 2, 3))
    b[0, 0] = 1.0
    b[1, 1] = 0.1
    mask_a = np.array([[True, True], [False, True]])
    mask_b = np.array([[False, True], [True, True]])
    # only (0, 1) and (1, 1) count
    expected = 10.0 * math.log10(1.0 / (0.01 / 2.0))
    value = masked_psnr(ImageBuffer(a, mask_a), ImageBuffer(b, mask_b))
    assert value == pytest.approx(expected)


def test_metric_report_adds_means():
    report = metric_report(
        [
            {"image": "a.png", "metric": "mpsnr", "value": 30.0, "valid_px": 10},
            {"image": "b.png", "metric": "mpsnr", "value": 40.0, "valid_px": 20},
        ]
    )
    assert list(report.columns) == REPORT_COLUMNS
    mean = report.iloc[-1]
    assert mean["image"] == "mean"
    assert mean["value"] == pytest.approx(35.0)
    assert mean["valid_px"] == 30


def test_single_row_report_has_no_mean():
    report = metric_report(
        [{"image": "a.png", "metric": "psnr", "value": math.inf, "valid_px": 4}]
    )
    assert len(report) == 1
