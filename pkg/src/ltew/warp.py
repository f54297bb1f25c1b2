import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.baselines.classical import BILINEAR, sample_points
from src.geometry.coords import Size, grid_coords
from src.geometry.derivatives import clamp_shape as clamp_shape_vector
from src.geometry.derivatives import shape_vector
from src.geometry.transform import Transform, apply_inverse
from src.ltew.model import LTEW, FourierField, MissingWeightsError
from src.utils.helpers import get_env_int, log_progress, log_summary
from src.utils.image_io import ImageBuffer, ImageSizeMismatchError

# queries are always decoded in blocks of this many rows, aligned to the
# global query index; the last block is padded by repeating its final row
QUERY_BLOCK = 256

FREQ_DUMP_COLUMNS = ["cx", "cy", "fx", "fy", "magnitude"]


@dataclass
class QueryBatch:
    """Output coordinates y, their inverse images x, shape vectors and validity.

    Rows of ``shape`` are zero where ``valid`` is False.
    """

    y: np.ndarray
    x: np.ndarray
    shape: np.ndarray
    valid: np.ndarray

    def __len__(self) -> int:
        return self.y.shape[0]


def build_queries(
    t: Transform,
    y: np.ndarray,
    clamp_shape: bool = False,
    shape_floor: Optional[Sequence[float]] = None,
) -> QueryBatch:
    y = np.asarray(y, dtype=np.float64).reshape(-1, 2)
    x, in_domain = apply_inverse(t, y)
    shape, shape_valid = shape_vector(t, y)
    valid = in_domain & shape_valid
    if clamp_shape:
        if shape_floor is None:
            raise ValueError("Shape clamping needs a floor")
        shape = clamp_shape_vector(shape, shape_floor)
    shape = np.where(valid[:, None], shape, 0.0)
    return QueryBatch(y, np.where(valid[:, None], x, 0.0), shape, valid)


def _pixels_of(img) -> np.ndarray:
    pixels = img.pixels if isinstance(img, ImageBuffer) else np.asarray(img)
    return np.asarray(pixels, dtype=np.float64)


def bilinear_skip(img, t: Transform, y) -> Tuple[np.ndarray, np.ndarray]:
    """Bilinear sample of the input at f^-1(y); invalid queries give 0."""
    pixels = _pixels_of(img)
    y = np.asarray(y, dtype=np.float64).reshape(-1, 2)
    x, valid = apply_inverse(t, y)
    rgb = np.zeros((y.shape[0], pixels.shape[2]), dtype=np.float64)
    if np.any(valid):
        rgb[valid] = sample_points(
            pixels, x[valid], BILINEAR, wrap=t.wraps_horizontally
        )
    return rgb, valid


def _decode_blocks(
    model: LTEW, fourier: FourierField, x: np.ndarray, shape: np.ndarray
) -> np.ndarray:
    residual = np.zeros((x.shape[0], 3), dtype=model.dtype)
    for start in range(0, x.shape[0], QUERY_BLOCK):
        stop = min(start + QUERY_BLOCK, x.shape[0])
        rows = np.arange(start, start + QUERY_BLOCK).clip(max=stop - 1)
        image_index = np.zeros(QUERY_BLOCK, dtype=np.int64)
        block = model.query(fourier, image_index, x[rows], shape[rows])
        residual[start:stop] = block[: stop - start]
    return residual


def local_ensemble_query(
    model: LTEW, fourier: FourierField, t: Transform, y, clamp_shape: bool = False
) -> Tuple[np.ndarray, np.ndarray]:
    """Ensemble residual for output coordinates y; invalid queries give 0."""
    queries = build_queries(t, y, clamp_shape, model.config.shape_floor)
    residual = np.zeros((len(queries), 3), dtype=model.dtype)
    if np.any(queries.valid):
        residual[queries.valid] = _decode_blocks(
            model, fourier, queries.x[queries.valid], queries.shape[queries.valid]
        )
    return residual, queries.valid


def _chunk_length(chunk_size: int, total: int) -> int:
    if chunk_size <= 0 or chunk_size >= total:
        return max(total, 1)
    return -(-chunk_size // QUERY_BLOCK) * QUERY_BLOCK


def warp_image(
    model: Optional[LTEW],
    img,
    t: Transform,
    out_size: Optional[Size] = None,
    clamp_shape: bool = False,
    chunk_size: Optional[int] = None,
    workers: Optional[int] = None,
) -> ImageBuffer:
    """Warps ``img`` through ``t`` as skip + ensemble residual, clipped to [0, 1].

    Valid queries are split into chunks of ``chunk_size`` (rounded up to a
    whole number of decode blocks; 0 means one chunk) and decoded on
    ``workers`` threads. The result does not depend on either setting.
    """
    if model is None:
        raise MissingWeightsError("The LTEW warp needs model weights")
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
    chunk_size = get_env_int("LTEW_CHUNK_SIZE", 0) if chunk_size is None else chunk_size
    workers = max(get_env_int("LTEW_WORKERS", 1) if workers is None else workers, 1)

    fourier = model.estimate_fourier(model.encode(pixels))
    queries = build_queries(
        t, grid_coords(out_size), clamp_shape, model.config.shape_floor
    )
    skip = np.zeros((len(queries), 3), dtype=np.float64)
    if np.any(queries.valid):
        skip[queries.valid] = sample_points(
            pixels, queries.x[queries.valid], BILINEAR, wrap=t.wraps_horizontally
        )

    index = np.flatnonzero(queries.valid)
    length = _chunk_length(chunk_size, index.size)
    chunks: List[np.ndarray] = [
        index[start : start + length] for start in range(0, index.size, length)
    ]
    logging.info(
        f"Warping {pixels.shape[1]}x{pixels.shape[0]} -> {out_size[1]}x{out_size[0]}: "
        f"{index.size} valid queries in {len(chunks)} chunk(s) on {workers} worker(s)"
    )

    times: List[float] = []
    start_time = time.perf_counter()

    def evaluate(chunk: np.ndarray) -> np.ndarray:
        chunk_start = time.perf_counter()
        residual = _decode_blocks(
            model, fourier, queries.x[chunk], queries.shape[chunk]
        )
        times.append(time.perf_counter() - chunk_start)
        return residual

    out = np.zeros((len(queries), 3), dtype=np.float64)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        residuals = executor.map(evaluate, chunks)
        for done, (chunk, residual) in enumerate(zip(chunks, residuals), start=1):
            out[chunk] = np.clip(skip[chunk] + residual, 0.0, 1.0)
            if len(chunks) > 1:
                log_progress(times, done, len(chunks), start_time, label="chunks")
    log_summary(times, label="chunk")

    return ImageBuffer(out.reshape(out_size + (3,)), queries.valid.reshape(out_size))


def freq_dump(
    fourier: FourierField,
    cell_range: Optional[Tuple[int, int, int, int]] = None,
    image: int = 0,
) -> pd.DataFrame:
    """One row per (cell, frequency pair) with its (fx, fy) and amplitude magnitude.

    ``cell_range`` is (y0, y1, x0, x1), half-open, in latent cell indices.
    """
    h, w = fourier.size
    y0, y1, x0, x1 = cell_range if cell_range is not None else (0, h, 0, w)
    if not (0 <= y0 <= h and 0 <= y1 <= h and 0 <= x0 <= w and 0 <= x1 <= w):
        raise ValueError(f"Cell range {(y0, y1, x0, x1)} outside the {h}x{w} field")
    if y1 <= y0 or x1 <= x0:
        return pd.DataFrame(columns=FREQ_DUMP_COLUMNS)

    d = fourier.n_freq
    amp = fourier.amp[image, :, y0:y1, x0:x1].astype(np.float64)
    pairs = fourier.pairs()[image, :, :, y0:y1, x0:x1].astype(np.float64)
    magnitude = np.sqrt(amp[:d] ** 2 + amp[d:] ** 2)
    rows, cols = np.meshgrid(np.arange(y0, y1), np.arange(x0, x1), indexing="ij")

    # (D, rows, cols) -> (rows, cols, D), flattened row-major
    def flat(values: np.ndarray) -> np.ndarray:
        return np.moveaxis(values, 0, -1).reshape(-1)

    return pd.DataFrame(
        {
            "cx": np.repeat(cols.reshape(-1), d),
            "cy": np.repeat(rows.reshape(-1), d),
            "fx": flat(pairs[0]),
            "fy": flat(pairs[1]),
            "magnitude": flat(magnitude),
        },
        columns=FREQ_DUMP_COLUMNS,
    )
