import logging
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

SUPPORTED_EXTENSIONS = (".png", ".ppm")


class UnsupportedImageError(ValueError):
    pass


class CorruptImageError(ValueError):
    pass


class ImageSizeMismatchError(ValueError):
    pass


@dataclass
class ImageBuffer:
    """H x W x 3 RGB in [0, 1] with an H x W validity mask; masked-out pixels are 0."""

    pixels: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ImageSizeMismatchError(
                f"Expected H x W x 3 pixels, got {self.pixels.shape}"
            )
        if self.mask.shape != self.pixels.shape[:2]:
            raise ImageSizeMismatchError(
                f"Mask {self.mask.shape} does not match pixels {self.pixels.shape[:2]}"
            )
        self.mask = self.mask.astype(bool, copy=False)

    @classmethod
    def full(cls, pixels: np.ndarray) -> "ImageBuffer":
        pixels = np.asarray(pixels)
        return cls(pixels, np.ones(pixels.shape[:2], dtype=bool))

    @property
    def size(self):
        return self.pixels.shape[:2]


def _check_extension(path: str) -> str:
    extension = os.path.splitext(path)[1].lower()
    if extension not in SUPPORTED_EXTENSIONS:
        raise UnsupportedImageError(
            f"Unsupported image format '{extension}' for {path}; "
            "use PNG or binary PPM (P6)"
        )
    return extension


def read_image(path: str) -> ImageBuffer:
    _check_extension(path)
    try:
        with Image.open(path) as image:
            image.load()
            if image.mode not in ("RGB", "RGBA", "L", "P"):
                raise UnsupportedImageError(
                    f"Unsupported image mode {image.mode} in {path}"
                )
            data = np.asarray(image.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise CorruptImageError(f"Cannot decode {path}: {e}") from e
    logging.debug(f"Read {path} ({data.shape[1]}x{data.shape[0]})")
    return ImageBuffer.full(data.astype(np.float64) / 255.0)


def _quantize(values: np.ndarray) -> np.ndarray:
    scaled = np.round(np.asarray(values, dtype=np.float64) * 255.0)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def write_image(path: str, image) -> None:
    extension = _check_extension(path)
    pixels = image.pixels if isinstance(image, ImageBuffer) else np.asarray(image)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    Image.fromarray(_quantize(pixels), mode="RGB").save(
        path, format="PNG" if extension == ".png" else "PPM"
    )
    logging.debug(f"Wrote {path}")


def read_mask(path: str) -> np.ndarray:
    _check_extension(path)
    try:
        with Image.open(path) as image:
            data = np.asarray(image.convert("L"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise CorruptImageError(f"Cannot decode mask {path}: {e}") from e
    return data >= 128


def write_mask(path: str, mask: np.ndarray) -> None:
    extension = _check_extension(path)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    data = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    # PPM is RGB-only here; masks written as PPM replicate the gray level
    if extension == ".ppm":
        rgb = np.repeat(data[..., None], 3, axis=2)
        Image.fromarray(rgb, mode="RGB").save(path, format="PPM")
    else:
        Image.fromarray(data, mode="L").save(path, format="PNG")


def load_optional_mask(path: Optional[str], size) -> np.ndarray:
    if path is None:
        return np.ones(size, dtype=bool)
    mask = read_mask(path)
    if mask.shape != tuple(size):
        raise ImageSizeMismatchError(
            f"Mask {path} is {mask.shape}, image is {tuple(size)}"
        )
    return mask
