"""Finite-difference checks of every hand-written gradient.

Layers are checked on random double-precision instances; the model is
checked end to end on a tiny double-precision configuration.
"""

import logging
from typing import List

import numpy as np

from src.ltew.model import LTEW, ModelConfig
from src.nn.gradcheck import GradCheckResult, check_gradient
from src.nn.layers import (
    conv3x3,
    conv3x3_grad,
    cos_pi,
    cos_pi_grad,
    linear,
    linear_grad,
    relu,
    relu_grad,
    sin_pi,
    sin_pi_grad,
)
from src.training.batch import loss_l1

LAYER_TOLERANCE = 1e-6
MODEL_TOLERANCE = 1e-5
LAYER_INSTANCES = 10
# the tiny model's parameter gradients are small next to its activations,
# so steps near 1e-5 sit on the roundoff floor
MODEL_STEP = 1e-3
TINY_MODEL = ModelConfig(
    channels=4, n_freq=3, hidden=8, shape_floor=(0.25, 0.0, 0.0, 0.25)
)
ENTRIES_PER_TENSOR = 12


def _check_affine_layer(
    name, forward, backward, shapes, rng
) -> List[GradCheckResult]:
    results = []
    for _ in range(LAYER_INSTANCES):
        x, w, b, upstream = (rng.normal(size=shape) for shape in shapes)
        dx, dw, db = backward(x, w, b, upstream)

        def objective() -> float:
            return float(np.sum(forward(x, w, b) * upstream))

        for arg, tensor, grad in (("x", x, dx), ("w", w, dw), ("b", b, db)):
            results.append(
                check_gradient(
                    f"{name}.{arg}", objective, tensor, grad, tolerance=LAYER_TOLERANCE
                )
            )
    return results


def _check_elementwise(
    name, forward, backward, draw, rng
) -> List[GradCheckResult]:
    results = []
    for _ in range(LAYER_INSTANCES):
        x = draw(rng)
        upstream = rng.normal(size=x.shape)

        def objective() -> float:
            return float(np.sum(forward(x) * upstream))

        results.append(
            check_gradient(
                name, objective, x, backward(x, upstream), tolerance=LAYER_TOLERANCE
            )
        )
    return results


def check_layer_gradients(seed: int = 0) -> List[GradCheckResult]:
    """One combined result per layer over LAYER_INSTANCES random instances."""
    rng = np.random.default_rng(seed)
    conv_shapes = [(2, 3, 5, 4), (4, 3, 3, 3), (4,), (2, 4, 5, 4)]
    linear_shapes = [(6, 5), (4, 5), (4,), (6, 4)]
    layers = {
        "conv3x3": _check_affine_layer(
            "conv3x3", conv3x3, conv3x3_grad, conv_shapes, rng
        ),
        "linear": _check_affine_layer(
            "linear", linear, linear_grad, linear_shapes, rng
        ),
        "relu": _check_elementwise(
            "relu", relu, relu_grad, lambda r: r.normal(size=12), rng
        ),
        "sin_pi": _check_elementwise(
            "sin_pi", sin_pi, sin_pi_grad, lambda r: r.uniform(-2.0, 2.0, 12), rng
        ),
        "cos_pi": _check_elementwise(
            "cos_pi", cos_pi, cos_pi_grad, lambda r: r.uniform(-2.0, 2.0, 12), rng
        ),
    }
    return [GradCheckResult.combine(name, results) for name, results in layers.items()]


def _tiny_problem(
    rng: np.random.Generator, batch: int = 2, size=(5, 6), queries: int = 8
):
    h, w = size
    images = rng.uniform(0.0, 1.0, (batch, 3, h, w))
    batch_index = np.repeat(np.arange(batch), queries // batch)
    x = rng.uniform(-0.95, 0.95, (batch_index.size, 2))
    shape = rng.normal(0.0, 1.0, (batch_index.size, 10))
    skip = rng.uniform(0.0, 1.0, (batch_index.size, 3))
    return images, batch_index, x, shape, skip


def check_model_gradients(seed: int = 0) -> List[GradCheckResult]:
    """Gradient of sum(pred * R) w.r.t. every parameter tensor.

    A smooth objective keeps the check away from L1 ties; ReLU kinks are
    skipped by the checker.
    """
    rng = np.random.default_rng(seed)
    model = LTEW.random(TINY_MODEL, seed=seed, dtype=np.float64)
    images, batch_index, x, shape, skip = _tiny_problem(rng)
    direction = rng.normal(0.0, 1.0, (batch_index.size, 3))

    def objective() -> float:
        pred = model.predict(images, batch_index, x, shape, skip)
        return float(np.sum(pred * direction))

    _, cache = model.predict(images, batch_index, x, shape, skip, keep=True)
    grads = model.backward(cache, direction)
    results = []
    for name, tensor in model.params.items():
        result = check_gradient(
            name,
            objective,
            tensor,
            grads[name],
            h=MODEL_STEP,
            samples=ENTRIES_PER_TENSOR,
            rng=rng,
            tolerance=MODEL_TOLERANCE,
        )
        results.append(result)
    return results


def check_loss_gradient(seed: int = 0) -> GradCheckResult:
    rng = np.random.default_rng(seed)
    pred = rng.uniform(0.0, 1.0, (8, 3))
    sign = rng.choice([-1.0, 1.0], size=pred.shape)
    gt = pred + sign * rng.uniform(0.05, 0.5, pred.shape)
    _, grad = loss_l1(pred, gt)
    return check_gradient(
        "loss_l1", lambda: loss_l1(pred, gt)[0], pred, grad, tolerance=LAYER_TOLERANCE
    )


def run_grad_checks(seed: int = 0) -> List[GradCheckResult]:
    """Layers, the L1 loss and the end-to-end model, each against its own tolerance."""
    results = check_layer_gradients(seed) + [check_loss_gradient(seed)]
    results += check_model_gradients(seed)
    for result in results:
        level = logging.INFO if result.passed() else logging.ERROR
        logging.log(
            level,
            f"{result.name}: max rel error {result.max_rel_error:.3e} "
            f"(tolerance {result.tolerance:g}, {result.checked} checked, "
            f"{result.skipped} skipped at kinks)",
        )
    return results
