import numpy as np
import pytest

from src.baselines.classical import (
    BICUBIC,
    BILINEAR,
    classical_warp,
    get_kernel,
    keys_cubic,
    sample_points,
    valid_mask,
)
from src.geometry.sampling import IN_SCALE, sample_homography
from src.geometry.transform import Homography, axis_scale, identity
from src.utils.image_io import ImageBuffer, ImageSizeMismatchError


def test_keys_kernel_interpolates_nodes():
    values = keys_cubic(np.array([0.0, 1.0, -1.0, 2.0, 2.5]))
    assert values.tolist() == [1.0, 0.0, 0.0, 0.0, 0.0]


@pytest.mark.parametrize("kernel", [BILINEAR, BICUBIC])
def test_kernel_weights_sum_to_one(kernel, rng):
    weights = kernel.weights(rng.uniform(0.0, 1.0, 1000))
    assert np.allclose(weights.sum(axis=-1), 1.0)


def test_unknown_kernel():
    with pytest.raises(ValueError):
        get_kernel("lanczos")


@pytest.mark.parametrize("kernel", ["bilinear", "bicubic"])
def test_identity_warp_reproduces_the_input(kernel, rng):
    pixels = rng.integers(0, 256, (8, 16, 3)) / 255.0
    out = classical_warp(ImageBuffer.full(pixels), identity((8, 16)), kernel=kernel)
    assert out.mask.all()
    assert np.array_equal(out.pixels, pixels)


@pytest.mark.parametrize("kernel", ["bilinear", "bicubic"])
def test_constant_image_stays_constant(kernel):
    rng = np.random.default_rng(11)
    t = sample_homography(rng, IN_SCALE, (24, 24))
    pixels = np.full(t.in_size + (3,), 0.3)
    out = classical_warp(pixels, t, kernel=kernel)
    assert np.allclose(out.pixels[out.mask], 0.3, atol=1e-12)
    assert np.all(out.pixels[~out.mask] == 0.0)


def test_void_pixels_are_zero_and_masked():
    # half of the output lands right of the input
    matrix = [[1.0, 0.0, 8.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    t = Homography(matrix, (8, 16), (8, 16))
    out = classical_warp(np.ones((8, 16, 3)), t, kernel="bicubic")
    assert out.mask[:, :8].all() and not out.mask[:, 8:].any()
    assert np.all(out.pixels[:, 8:] == 0.0)
    assert np.array_equal(valid_mask(t), out.mask)


def test_size_mismatch_is_reported():
    with pytest.raises(ImageSizeMismatchError):
        classical_warp(np.zeros((4, 4, 3)), identity((8, 8)))
    with pytest.raises(ImageSizeMismatchError):
        classical_warp(np.zeros((8, 8, 3)), identity((8, 8)), out_size=(4, 4))


def test_upscale_output_size():
    t = axis_scale(2.0, 3.0, (5, 7))
    out = classical_warp(np.full((5, 7, 3), 0.5), t)
    assert out.pixels.shape == (15, 14, 3)


def test_horizontal_wrap_blends_both_edges():
    pixels = np.zeros((2, 4, 3))
    pixels[:, 0] = 1.0
    coords = np.array([[-1.0, 0.0], [1.0, 0.0]])
    assert np.allclose(sample_points(pixels, coords, BILINEAR, wrap=True), 0.5)
    clamped = sample_points(pixels, coords, BILINEAR, wrap=False)
    assert np.allclose(clamped, [[1.0] * 3, [0.0] * 3])


def test_affine_warp_moves_the_spectral_peak():
    """A sinusoid with frequency f viewed through x = A y + t has frequency A^T f."""
    rng = np.random.default_rng(2024)
    size_in, size_out = 128, 64
    centers = np.arange(size_in) + 0.5
    grid_y, grid_x = np.meshgrid(centers, centers, indexing="ij")
    window = np.outer(np.hanning(size_out), np.hanning(size_out))
    for _ in range(20):
        freq = rng.integers(-8, 9, 2)
        while np.hypot(*freq) < 3:
            freq = rng.integers(-8, 9, 2)
        phase = (freq[0] * grid_x + freq[1] * grid_y) / size_in
        wave = 0.5 + 0.4 * np.cos(2.0 * np.pi * phase)
        theta = rng.uniform(0.0, 2.0 * np.pi)
        scale = rng.uniform(0.8, 1.25)
        c, s = np.cos(theta), np.sin(theta)
        a = scale * np.array([[c, -s], [s, c]])
        shift = size_in / 2.0 - a @ np.array([size_out / 2.0, size_out / 2.0])
        matrix = np.eye(3)
        matrix[:2, :2] = a
        matrix[:2, 2] = shift
        t = Homography(matrix, (size_in, size_in), (size_out, size_out))

        out = classical_warp(np.repeat(wave[..., None], 3, axis=2), t, kernel="bicubic")
        assert out.mask.all()
        signal = out.pixels[..., 0] - out.pixels[..., 0].mean()
        spectrum = np.abs(np.fft.fft2(signal * window))
        spectrum[0, 0] = 0.0
        row, col = np.unravel_index(np.argmax(spectrum), spectrum.shape)
        bins = np.fft.fftfreq(size_out) * size_out
        peak = np.array([bins[col], bins[row]])
        expected = a.T @ freq * size_out / size_in
        assert min(np.abs(peak - expected).max(), np.abs(peak + expected).max()) <= 1.0


def _keys_resize_matrix(n_in: int, factor: int) -> np.ndarray:
    """Row j holds the a=-0.5 cubic weights of output sample j on the clamped input."""
    matrix = np.zeros((n_in * factor, n_in))
    for j in range(n_in * factor):
        position = (j + 0.5) / factor - 0.5
        base = int(np.floor(position))
        for k in range(base - 1, base + 3):
            d = abs(position - k)
            if d <= 1.0:
                weight = 1.5 * d**3 - 2.5 * d**2 + 1.0
            elif d < 2.0:
                weight = -0.5 * d**3 + 2.5 * d**2 - 4.0 * d + 2.0
            else:
                weight = 0.0
            matrix[j, min(max(k, 0), n_in - 1)] += weight
    return matrix


def test_bicubic_upscale_matches_a_separable_resize(rng):
    pixels = rng.uniform(0.0, 1.0, (9, 13, 3))
    out = classical_warp(pixels, axis_scale(2.0, 2.0, (9, 13)), kernel="bicubic")
    rows, cols = _keys_resize_matrix(9, 2), _keys_resize_matrix(13, 2)
    expected = np.clip(np.einsum("ij,jkc,lk->ilc", rows, pixels, cols), 0.0, 1.0)
    assert out.mask.all()
    assert np.abs(out.pixels - expected).max() < 1e-6
