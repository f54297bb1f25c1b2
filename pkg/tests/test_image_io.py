import numpy as np
import pytest

from src.utils.image_io import (
    CorruptImageError,
    ImageBuffer,
    ImageSizeMismatchError,
    UnsupportedImageError,
    load_optional_mask,
    read_image,
    read_mask,
    write_image,
    write_mask,
)


@pytest.mark.parametrize("extension", [".png", ".ppm"])
def test_eight_bit_content_survives_a_roundtrip(tmp_path, rng, extension):
    pixels = rng.integers(0, 256, (5, 7, 3)) / 255.0
    path = str(tmp_path / f"image{extension}")
    write_image(path, pixels)
    image = read_image(path)
    assert image.mask.all()
    assert np.array_equal(image.pixels, pixels)


def test_png_and_ppm_decode_identically(tmp_path, rng):
    pixels = rng.integers(0, 256, (4, 4, 3)) / 255.0
    write_image(str(tmp_path / "a.png"), pixels)
    write_image(str(tmp_path / "a.ppm"), pixels)
    png = read_image(str(tmp_path / "a.png"))
    ppm = read_image(str(tmp_path / "a.ppm"))
    assert np.array_equal(png.pixels, ppm.pixels)


def test_single_pixel_image(tmp_path):
    path = str(tmp_path / "dot.png")
    write_image(path, np.array([[[1.0, 0.0, 128 / 255]]]))
    assert read_image(path).pixels.tolist() == [[[1.0, 0.0, 128 / 255]]]


def test_out_of_range_values_are_clamped(tmp_path):
    path = str(tmp_path / "clamp.png")
    write_image(path, np.array([[[1.7, -0.2, 0.5]]]))
    assert read_image(path).pixels.tolist() == [[[1.0, 0.0, 128 / 255]]]


def test_unsupported_and_corrupt_files(tmp_path):
    with pytest.raises(UnsupportedImageError):
        read_image(str(tmp_path / "photo.jpg"))
    bad = tmp_path / "broken.png"
    bad.write_bytes(b"definitely not a png")
    with pytest.raises(CorruptImageError):
        read_image(str(bad))


@pytest.mark.parametrize("extension", [".png", ".ppm"])
def test_mask_roundtrip(tmp_path, extension):
    mask = np.array([[True, False, True], [False, False, True]])
    path = str(tmp_path / f"mask{extension}")
    write_mask(path, mask)
    assert np.array_equal(read_mask(path), mask)
    assert np.array_equal(load_optional_mask(path, (2, 3)), mask)
    with pytest.raises(ImageSizeMismatchError):
        load_optional_mask(path, (3, 2))


def test_missing_mask_means_everything_is_valid():
    assert load_optional_mask(None, (2, 4)).all()


def test_image_buffer_checks_its_shapes():
    with pytest.raises(ImageSizeMismatchError):
        ImageBuffer(np.zeros((2, 2, 3)), np.ones((3, 3)))
    with pytest.raises(ImageSizeMismatchError):
        ImageBuffer(np.zeros((2, 2)), np.ones((2, 2)))
