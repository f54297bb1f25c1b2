"""Weight file format.

Layout: the 8-byte magic ``LTEW0001`` followed by one record per tensor until
end of file. A record is the name length (uint32), the UTF-8 name, the
dimension count (uint32), each dimension (uint32) and the payload as float32.
All integers and floats are little-endian. Tensors are stored in single
precision.
"""

import logging
import os
import struct
from collections import OrderedDict
from typing import Dict

import numpy as np

MAGIC = b"LTEW0001"

ModelWeights = Dict[str, np.ndarray]


class WeightFileError(ValueError):
    pass


class BadMagicError(WeightFileError):
    pass


class TruncatedWeightsError(WeightFileError):
    pass


class DuplicateTensorError(WeightFileError):
    pass


def encode_weights(weights: ModelWeights) -> bytes:
    chunks = [MAGIC]
    for name, tensor in weights.items():
        encoded_name = name.encode("utf-8")
        tensor = np.asarray(tensor)
        chunks.append(struct.pack("<I", len(encoded_name)))
        chunks.append(encoded_name)
        chunks.append(struct.pack("<I", tensor.ndim))
        chunks.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        chunks.append(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    return b"".join(chunks)


def decode_weights(data: bytes) -> ModelWeights:
    if data[: len(MAGIC)] != MAGIC:
        raise BadMagicError(
            f"Not a weight file: magic {data[:len(MAGIC)]!r}, expected {MAGIC!r}"
        )
    weights: ModelWeights = OrderedDict()
    offset = len(MAGIC)

    def take(size: int, what: str) -> bytes:
        nonlocal offset
        if offset + size > len(data):
            raise TruncatedWeightsError(
                f"Weight file truncated while reading {what} at byte {offset} "
                f"(need {size}, have {len(data) - offset})"
            )
        chunk = data[offset : offset + size]
        offset += size
        return chunk

    while offset < len(data):
        (name_length,) = struct.unpack("<I", take(4, "name length"))
        try:
            name = take(name_length, "tensor name").decode("utf-8")
        except UnicodeDecodeError as e:
            raise WeightFileError(
                f"Tensor name is not valid UTF-8 at byte {offset}"
            ) from e
        (ndim,) = struct.unpack("<I", take(4, f"dimension count of '{name}'"))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, f"dimensions of '{name}'"))
        count = int(np.prod(shape, dtype=np.int64))
        payload = take(4 * count, f"payload of '{name}'")
        if name in weights:
            raise DuplicateTensorError(f"Tensor '{name}' appears more than once")
        tensor = np.frombuffer(payload, dtype="<f4").astype(np.float32)
        weights[name] = tensor.reshape(shape)
    return weights


def save_weights(weights: ModelWeights, path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as file:
        file.write(encode_weights(weights))
    logging.info(f"Saved {len(weights)} tensors to {path}")


def load_weights(path: str) -> ModelWeights:
    with open(path, "rb") as file:
        weights = decode_weights(file.read())
    logging.info(f"Loaded {len(weights)} tensors from {path}")
    return weights
