"""
Central finite-difference checks for gradients computed by :mod:`metaimpute.ndgrad`.

>>> x = parameter([1.0, -2.0, 3.0])
>>> check_gradients(lambda: (x * x).sum(), {"x": x})
{'x': 0.0...}
"""

from typing import Callable, Dict, Mapping

import numpy as np

from metaimpute.ndgrad.value import Tensor, Value, backward

DEFAULT_STEP = 1e-6


def numerical_gradient(
    loss_fn: Callable[[], Value],
    param: Value,
    step: float = DEFAULT_STEP,
) -> Tensor:
    """
    Estimate ``d loss / d param`` by central differences, perturbing
    ``param.tensor`` in place one element at a time.

    Args:
        loss_fn: Builds a fresh graph and returns a scalar loss.
        param: The leaf to perturb.
        step: Half-width of the difference quotient.
    """
    flat = param.tensor.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        upper = loss_fn().item()
        flat[i] = original - step
        lower = loss_fn().item()
        flat[i] = original
        grad[i] = (upper - lower) / (2.0 * step)
    return grad.reshape(param.shape)


def relative_error(analytic: Tensor, numeric: Tensor, floor: float = 1e-8) -> float:
    """
    ``|a - n| / max(|a|, |n|, floor)`` using Euclidean norms over the whole tensor.
    """
    diff = float(np.linalg.norm(analytic - numeric))
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), floor)
    return diff / scale


def check_gradients(
    loss_fn: Callable[[], Value],
    params: Mapping[str, Value],
    step: float = DEFAULT_STEP,
) -> Dict[str, float]:
    """
    Compare analytic and numerical gradients for every named parameter.

    ``loss_fn`` must be deterministic: it is called once for the analytic pass
    and twice per parameter element for the numerical pass.

    Returns:
        Mapping of parameter name to relative error.
    """
    for param in params.values():
        param.zero_grad()
    backward(loss_fn())
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.tensor))
        for name, p in params.items()
    }
    for param in params.values():
        param.zero_grad()
    return {
        name: relative_error(analytic[name], numerical_gradient(loss_fn, p, step))
        for name, p in params.items()
    }
