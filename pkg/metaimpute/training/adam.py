"""
Adam with bias correction, applied in place to named parameters.
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np
from typing_extensions import Self

from metaimpute.exceptions import DimensionError, NonFiniteGradientError
from metaimpute.ndgrad import Tensor, Value

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass
class AdamState:
    """
    First and second moment estimates per parameter, and the number of
    steps taken so far.
    """

    first: Dict[str, Tensor] = field(default_factory=dict)
    second: Dict[str, Tensor] = field(default_factory=dict)
    step: int = 0
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPSILON

    @classmethod
    def zeros(cls, params: Mapping[str, Value]) -> Self:
        return cls(
            first={name: np.zeros_like(value.tensor) for name, value in params.items()},
            second={name: np.zeros_like(value.tensor) for name, value in params.items()},
        )


def check_finite(grads: Mapping[str, Tensor]) -> None:
    """
    Raises:
        NonFiniteGradientError: naming the first parameter whose gradient
            contains NaN or Inf.
    """
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError(name)


def adam_step(
    params: Mapping[str, Value],
    grads: Mapping[str, Tensor],
    state: AdamState,
    lr: float,
) -> None:
    """
    One bias-corrected Adam update:

    .. code-block:: text

        m <- b1 m + (1 - b1) g
        v <- b2 v + (1 - b2) g^2
        p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)

    Parameters are replaced with new arrays, so graphs built earlier keep
    the values they were built with. Nothing is updated if any gradient is
    not finite.

    Raises:
        NonFiniteGradientError: if a gradient holds NaN or Inf.
        DimensionError: if a gradient or moment does not match its parameter.
    """
    check_finite(grads)
    for name, value in params.items():
        if name not in grads or grads[name].shape != value.shape:
            got = grads[name].shape if name in grads else None
            raise DimensionError(f"gradient of {name!r} has shape {got}, expected {value.shape}")
        if name not in state.first:
            state.first[name] = np.zeros_like(value.tensor)
            state.second[name] = np.zeros_like(value.tensor)
        elif state.first[name].shape != value.shape:
            raise DimensionError(f"Adam moments of {name!r} do not match the parameter")

    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for name, value in params.items():
        grad = grads[name]
        state.first[name] = state.beta1 * state.first[name] + (1.0 - state.beta1) * grad
        state.second[name] = state.beta2 * state.second[name] + (1.0 - state.beta2) * grad**2
        m_hat = state.first[name] / correction1
        v_hat = state.second[name] / correction2
        value.tensor = value.tensor - lr * m_hat / (np.sqrt(v_hat) + state.eps)
