"""Central finite differences for checking reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor, backward, no_grad


def numerical_gradient(f: Callable[[], float], arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """d f / d arr by central differences; ``arr`` is perturbed in place and restored."""
    grad = np.zeros_like(arr)
    flat, g = arr.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        g[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """``||a - n|| / max(||a||, ||n||, floor)`` over a whole tensor."""
    num = float(np.linalg.norm(analytic - numeric))
    den = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), floor)
    return num / den


def check_gradients(
    loss_fn: Callable[[], Tensor], params: Mapping[str, Tensor], h: float = 1e-5
) -> dict[str, float]:
    """Relative error between backprop and finite differences for every tensor in ``params``.

    ``loss_fn`` must rebuild the graph from the current parameter values on each call.
    """
    for p in params.values():
        p.zero_grad()
    backward(loss_fn())
    analytic = {k: p.grad.copy() for k, p in params.items()}

    def value() -> float:
        with no_grad():
            return loss_fn().item()

    return {
        k: relative_error(analytic[k], numerical_gradient(value, p.data, h)) for k, p in params.items()
    }
