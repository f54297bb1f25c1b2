import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

Params = Dict[str, np.ndarray]


class NonFiniteGradientError(RuntimeError):
    def __init__(self, name: str):
        super().__init__(f"Non-finite gradient in tensor '{name}'")
        self.name = name


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: Params = field(default_factory=dict)
    second_moment: Params = field(default_factory=dict)


def adam_update(params: Params, grads: Params, state: AdamState) -> Params:
    """One bias-corrected Adam step; moments in ``state`` are updated in place.

    Returns the new parameter dict (input arrays are not modified).
    """
    for name, grad in grads.items():
        if name not in params:
            raise KeyError(f"Gradient for unknown parameter '{name}'")
        if grad.shape != params[name].shape:
            raise ValueError(
                f"Gradient for '{name}' has shape {grad.shape}, "
                f"parameter has {params[name].shape}"
            )
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError(name)

    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    updated = {}
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            updated[name] = param
            continue
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(param)
            v = np.zeros_like(param)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        update = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        updated[name] = (param - update).astype(param.dtype, copy=False)
    logging.debug(f"Adam step {state.step} (lr={state.lr:g}) over {len(grads)} tensors")
    return updated
