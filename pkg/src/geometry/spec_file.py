"""Transform-spec text files.

One record per file, blank lines and ``#`` comments ignored::

    scale <s_x> <s_y>
    homography <m00> <m01> <m02> <m10> <m11> <m12> <m20> <m21> <m22> [<out_w> <out_h>]
    erp <fov> <yaw> <pitch> <out_w> <out_h>

The input image size is only known when the transform is bound to an image,
so parsing yields a ``TransformSpec`` that ``build`` turns into a Transform.
"""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from src.geometry.coords import Size
from src.geometry.transform import (
    Homography,
    Transform,
    TransformError,
    axis_scale,
    erp_perspective,
)


class TransformSpecError(TransformError):
    pass


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    values: Tuple[float, ...]

    def build(self, in_size: Size) -> Transform:
        if self.kind == "scale":
            return axis_scale(self.values[0], self.values[1], in_size)
        if self.kind == "homography":
            matrix = np.array(self.values[:9]).reshape(3, 3)
            out_size = in_size
            if len(self.values) == 11:
                out_size = (_as_size(self.values[10]), _as_size(self.values[9]))
            return Homography(matrix, in_size, out_size)
        if self.kind == "erp":
            fov, yaw, pitch, out_w, out_h = self.values
            out_size = (_as_size(out_h), _as_size(out_w))
            return erp_perspective(fov, yaw, pitch, out_size, in_size)
        raise TransformSpecError(f"Unknown transform kind {self.kind!r}")


ARITY = {"scale": (2,), "homography": (9, 11), "erp": (5,)}


def _as_size(value: float) -> int:
    if value != int(value) or value < 1:
        raise TransformSpecError(
            f"Image dimension must be a positive integer, got {value}"
        )
    return int(value)


def parse_transform_spec(text: str) -> TransformSpec:
    records: List[List[str]] = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            records.append(line.split())
    if len(records) != 1:
        raise TransformSpecError(
            f"Expected exactly one transform record, found {len(records)}"
        )
    kind, *fields = records[0]
    kind = kind.lower()
    if kind not in ARITY:
        raise TransformSpecError(
            f"Unknown transform kind {kind!r}, expected one of {sorted(ARITY)}"
        )
    if len(fields) not in ARITY[kind]:
        expected = " or ".join(str(n) for n in ARITY[kind])
        raise TransformSpecError(f"'{kind}' takes {expected} values, got {len(fields)}")
    try:
        values = tuple(float(field) for field in fields)
    except ValueError as e:
        raise TransformSpecError(f"Malformed number in '{kind}' record: {e}") from e
    if not all(np.isfinite(values)):
        raise TransformSpecError(f"Non-finite value in '{kind}' record")
    if kind in ("homography", "erp") and len(values) in (11, 5):
        # trailing output size must be integral
        _as_size(values[-1])
        _as_size(values[-2])
    return TransformSpec(kind, values)


def load_transform(path: str, in_size: Size) -> Transform:
    with open(path, "r", encoding="utf-8") as file:
        spec = parse_transform_spec(file.read())
    return spec.build(in_size)
