"""Central finite-difference checks for hand-written gradients.

Relative error of an entry is |a - n| / max(|a|, |n|, floor) where the floor
is a small fraction of the tensor's largest analytic gradient, so entries
with near-zero gradients are judged against the tensor's scale. ``n`` is the
Richardson combination of the central differences at steps h and h/2, which
cancels the h^2 truncation term. Entries where the step straddles a kink
(ReLU, L1) are detected by comparing the two step sizes and skipped.
"""

from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

SCALE_FLOOR = 1e-3
KINK_RATIO = 1e-4
DEFAULT_TOLERANCE = 1e-6


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    checked: int
    skipped: int
    tolerance: float = DEFAULT_TOLERANCE

    def passed(self, tolerance: Optional[float] = None) -> bool:
        tolerance = self.tolerance if tolerance is None else tolerance
        return (
            self.checked > 0
            and self.max_rel_error < tolerance
            and self.skipped <= self.checked
        )

    @classmethod
    def combine(
        cls, name: str, results: Iterable["GradCheckResult"]
    ) -> "GradCheckResult":
        results = list(results)
        return cls(
            name,
            max((r.max_rel_error for r in results), default=0.0),
            sum(r.checked for r in results),
            sum(r.skipped for r in results),
            min((r.tolerance for r in results), default=DEFAULT_TOLERANCE),
        )


def _central(f: Callable[[], float], x: np.ndarray, index, h: float) -> float:
    original = x[index]
    x[index] = original + h
    plus = f()
    x[index] = original - h
    minus = f()
    x[index] = original
    return (plus - minus) / (2.0 * h)


def check_gradient(
    name: str,
    f: Callable[[], float],
    x: np.ndarray,
    analytic: np.ndarray,
    h: float = 1e-5,
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    tolerance: float = DEFAULT_TOLERANCE,
) -> GradCheckResult:
    """Compares ``analytic`` with central differences of ``f`` w.r.t. entries of ``x``.

    ``x`` is perturbed in place and restored; ``f`` must read it on every call.
    """
    if x.dtype != np.float64:
        raise TypeError(f"Gradient checks need float64 tensors, '{name}' is {x.dtype}")
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != x.shape:
        raise ValueError(
            f"Analytic gradient for '{name}' has shape {analytic.shape}, "
            f"expected {x.shape}"
        )
    indices = list(np.ndindex(x.shape))
    if samples is not None and samples < len(indices):
        rng = rng if rng is not None else np.random.default_rng(0)
        chosen = rng.choice(len(indices), size=samples, replace=False)
        indices = [indices[i] for i in sorted(chosen)]
    floor = max(SCALE_FLOOR * float(np.max(np.abs(analytic), initial=0.0)), 1e-12)

    worst, checked, skipped = 0.0, 0, 0
    for index in indices:
        numeric = _central(f, x, index, h)
        numeric_half = _central(f, x, index, h / 2.0)
        a = analytic[index]
        denom = max(abs(a), abs(numeric), floor)
        if abs(numeric - numeric_half) > KINK_RATIO * denom:
            skipped += 1
            continue
        extrapolated = (4.0 * numeric_half - numeric) / 3.0
        worst = max(worst, abs(a - extrapolated) / denom)
        checked += 1
    return GradCheckResult(name, worst, checked, skipped, tolerance)
