"""
Neural building blocks of the prior generator: exchangeable matrix layers,
feed-forward prior networks, and dropout.

An exchangeable layer maps an ``N x M x C_in`` representation to
``N x M x C_out`` and commutes with any permutation of rows or columns.
Its weight count does not depend on ``N`` or ``M``.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from typing_extensions import Self, TypeAlias

from metaimpute.exceptions import ConfigurationError, ContractError, DimensionError
from metaimpute.ndgrad import (
    Tensor,
    Value,
    constant,
    masked_reduce,
    matmul,
    parameter,
    reduce_mean,
    relu,
    reshape,
)

Activation: TypeAlias = Literal["relu", "identity"]


def glorot_uniform(
    rng: np.random.Generator,
    shape: Tuple[int, ...],
    fan_in: int,
    fan_out: int,
) -> Tensor:
    """
    Draw weights uniformly from ``±sqrt(6 / (fan_in + fan_out))``.
    """
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass(frozen=True)
class DropoutSpec:
    """
    Inverted dropout. Disabled or zero-rate dropout is the identity map.
    """

    rate: float = 0.0
    enabled: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.rate < 1.0:
            raise ConfigurationError(f"dropout rate must be in [0, 1), got {self.rate}")

    @property
    def active(self) -> bool:
        return self.enabled and self.rate > 0.0


def dropout_apply(
    x: Value,
    spec: DropoutSpec,
    rng: Optional[np.random.Generator] = None,
) -> Value:
    """
    Zero each activation with probability ``spec.rate`` and scale the
    survivors by ``1 / (1 - rate)``. Identity when the spec is inactive.
    """
    if not spec.active:
        return x
    if rng is None:
        raise ContractError("active dropout needs a random generator")
    keep = (rng.random(x.shape) >= spec.rate) / (1.0 - spec.rate)
    return x * keep


@dataclass
class ExchangeableLayer:
    """
    One exchangeable matrix layer.

    ``w[:, :, 0]`` weighs the element itself, ``w[:, :, 1]`` the average of
    its column, ``w[:, :, 2]`` the average of its row and ``w[:, :, 3]`` the
    average of the whole matrix; ``bias`` is added per output channel.
    All averages run over observed entries only.
    """

    #: Weights, shape ``[C_in, C_out, 4]``.
    w: Value

    #: Bias, shape ``[C_out]``.
    bias: Value

    activation: Activation = "relu"

    def __post_init__(self) -> None:
        if self.w.ndim != 3 or self.w.shape[2] != 4:
            raise DimensionError(f"layer weights must be [C_in, C_out, 4], got {self.w.shape}")
        if self.bias.shape != (self.w.shape[1],):
            raise DimensionError(f"bias shape {self.bias.shape} does not match {self.w.shape}")

    @classmethod
    def initialize(
        cls,
        c_in: int,
        c_out: int,
        rng: np.random.Generator,
        activation: Activation = "relu",
    ) -> Self:
        # each output sums four terms over c_in channels
        w = glorot_uniform(rng, (c_in, c_out, 4), fan_in=4 * c_in, fan_out=c_out)
        return cls(parameter(w), parameter(np.zeros(c_out)), activation)

    @property
    def c_in(self) -> int:
        return self.w.shape[0]

    @property
    def c_out(self) -> int:
        return self.w.shape[1]

    @property
    def num_parameters(self) -> int:
        return self.c_in * self.c_out * 4 + self.c_out

    def parameters(self) -> Dict[str, Value]:
        return {"w": self.w, "bias": self.bias}


def exml_forward(
    layer: ExchangeableLayer,
    z: Value,
    mask: Tensor,
    activation: Optional[Activation] = None,
) -> Value:
    """
    Apply one exchangeable layer to ``z`` (``[N, M, C_in]``) under ``mask`` (``[N, M]``).

    Args:
        layer: The layer.
        z: Input representation.
        mask: Binary observation indicator.
        activation: Overrides ``layer.activation`` when given.

    Raises:
        DimensionError: if ``z`` or ``mask`` do not fit the layer.
    """
    b = np.asarray(mask, dtype=np.float64)
    if z.ndim != 3 or z.shape[2] != layer.c_in:
        raise DimensionError(f"layer expects [N, M, {layer.c_in}], got {z.shape}")
    if b.shape != z.shape[:2]:
        raise DimensionError(f"mask shape {b.shape} does not match input {z.shape}")
    n, m, _ = z.shape
    c_in, c_out = layer.c_in, layer.c_out
    w = layer.w

    own = matmul(z * b[:, :, None], w[:, :, 0])
    column = matmul(masked_reduce(z, b, "rows"), w[:, :, 1])
    row = matmul(masked_reduce(z, b, "cols"), w[:, :, 2])
    whole = matmul(reshape(masked_reduce(z, b, "all"), (1, c_in)), w[:, :, 3])

    out = (
        own
        + reshape(column, (1, m, c_out))
        + reshape(row, (n, 1, c_out))
        + reshape(whole, (1, 1, c_out))
        + layer.bias
    )
    if (activation or layer.activation) == "relu":
        return relu(out)
    return out


def exml_stack(
    values: Tensor,
    mask: Tensor,
    layers: Sequence[ExchangeableLayer],
    dropout: Optional[DropoutSpec] = None,
    rng: Optional[np.random.Generator] = None,
) -> Value:
    """
    Run a matrix through a stack of exchangeable layers and return the final
    representation ``Z`` (``[N, M, C]``). The last layer is always linear;
    dropout, if active, follows every other layer.

    Missing entries enter the stack as 0.

    Raises:
        ConfigurationError: if the stack is empty or the channel counts do not chain.
    """
    if not layers:
        raise ConfigurationError("an exchangeable stack needs at least one layer")
    if layers[0].c_in != 1:
        raise ConfigurationError(f"first layer must take 1 channel, got {layers[0].c_in}")
    for i, (lower, upper) in enumerate(zip(layers, layers[1:])):
        if lower.c_out != upper.c_in:
            raise ConfigurationError(
                f"layer {i} outputs {lower.c_out} channels, layer {i + 1} expects {upper.c_in}"
            )
    b = np.asarray(mask, dtype=np.float64)
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 2 or x.shape != b.shape:
        raise DimensionError(f"values {x.shape} and mask {b.shape} must be equal matrices")

    z = constant((x * b)[:, :, None])
    last = len(layers) - 1
    for i, layer in enumerate(layers):
        z = exml_forward(layer, z, b, activation="identity" if i == last else None)
        if i != last and dropout is not None:
            z = dropout_apply(z, dropout, rng)
    return z


@dataclass
class FeedForward:
    """
    Fully connected network with ReLU hidden layers and a linear output.
    """

    weights: List[Value] = field(default_factory=list)
    biases: List[Value] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.weights or len(self.weights) != len(self.biases):
            raise ConfigurationError("a feed-forward network needs matching weights and biases")
        for i, (lower, upper) in enumerate(zip(self.weights, self.weights[1:])):
            if lower.shape[1] != upper.shape[0]:
                raise ConfigurationError(f"layer {i} and {i + 1} widths do not chain")

    @classmethod
    def initialize(cls, widths: Sequence[int], rng: np.random.Generator) -> Self:
        if len(widths) < 2:
            raise ConfigurationError(f"need at least input and output width, got {widths}")
        weights = [
            parameter(glorot_uniform(rng, (fan_in, fan_out), fan_in, fan_out))
            for fan_in, fan_out in zip(widths, widths[1:])
        ]
        biases = [parameter(np.zeros(width)) for width in widths[1:]]
        return cls(weights, biases)

    @property
    def widths(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def in_width(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_width(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self) -> Dict[str, Value]:
        named: Dict[str, Value] = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            named[f"{i}.w"] = w
            named[f"{i}.b"] = b
        return named

    def __call__(
        self,
        x: Value,
        dropout: Optional[DropoutSpec] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> Value:
        if x.ndim != 2 or x.shape[1] != self.in_width:
            raise DimensionError(f"network expects [*, {self.in_width}], got {x.shape}")
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = matmul(x, w) + b
            if i != last:
                x = relu(x)
                if dropout is not None:
                    x = dropout_apply(x, dropout, rng)
        return x


def prior_means(
    z: Value,
    f_u: FeedForward,
    f_v: FeedForward,
    dropout: Optional[DropoutSpec] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Value, Value]:
    """
    Prior means of the factors: each row's representation averaged over all
    ``M`` columns goes through ``f_u``, each column's averaged over all ``N``
    rows goes through ``f_v``. The averages include unobserved positions.

    Returns:
        ``(U0, V0)`` of shapes ``[N, K]`` and ``[M, K]``.
    """
    if z.ndim != 3:
        raise DimensionError(f"representation must be [N, M, C], got {z.shape}")
    if f_u.in_width != z.shape[2] or f_v.in_width != z.shape[2]:
        raise DimensionError(
            f"prior networks take {f_u.in_width}/{f_v.in_width} inputs, representation has {z.shape[2]}"
        )
    u0 = f_u(reduce_mean(z, axis=1), dropout, rng)
    v0 = f_v(reduce_mean(z, axis=0), dropout, rng)
    return u0, v0
