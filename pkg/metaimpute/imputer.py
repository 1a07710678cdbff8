"""
The full imputation model: infer prior means from the observed entries, run
``T`` differentiable gradient-descent steps on the MAP objective, and predict
every entry as the inner product of the adapted factors.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Literal, Mapping, Optional, Tuple

import numpy as np
from typing_extensions import Self, TypeAlias

from metaimpute.exceptions import ConfigurationError, ContractError, DimensionError
from metaimpute.layers import DropoutSpec, ExchangeableLayer, FeedForward, exml_stack, prior_means
from metaimpute.models import AdaptConfig, ModelConfig
from metaimpute.ndgrad import Tensor, Value, parameter, softplus, zero_grad

Mode: TypeAlias = Literal["train", "eval"]


def inverse_softplus(value: float) -> float:
    """
    The ``lambda_raw`` for which ``softplus(lambda_raw) == value``.

    >>> round(inverse_softplus(1.0), 4)
    0.5413
    """
    if value <= 0:
        raise ConfigurationError(f"softplus only reaches positive values, got {value}")
    return value + math.log(-math.expm1(-value))


@dataclass
class FactorPair:
    """
    Row factors ``U`` (``N x K``), column factors ``V`` (``M x K``) and
    the prior means they started from.
    """

    U: Value
    V: Value
    U0: Value
    V0: Value

    @classmethod
    def from_priors(cls, U0: Value, V0: Value) -> Self:
        if U0.ndim != 2 or V0.ndim != 2 or U0.shape[1] != V0.shape[1]:
            raise DimensionError(f"prior means {U0.shape} and {V0.shape} do not share a rank")
        return cls(U0, V0, U0, V0)

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.U.shape[0], self.V.shape[0])


class ModelParams:
    """
    Everything meta-training learns: the exchangeable stack, the two prior
    networks and the raw prior precision (``lam = softplus(lambda_raw)``).
    """

    def __init__(
        self,
        layers: List[ExchangeableLayer],
        f_u: FeedForward,
        f_v: FeedForward,
        lambda_raw: Value,
    ):
        if lambda_raw.shape != ():
            raise DimensionError(f"lambda_raw must be a scalar, got {lambda_raw.shape}")
        if f_u.out_width != f_v.out_width:
            raise ConfigurationError(
                f"prior networks disagree on the rank: {f_u.out_width} vs {f_v.out_width}"
            )
        self.layers = layers
        self.f_u = f_u
        self.f_v = f_v
        self.lambda_raw = lambda_raw

    def __repr__(self) -> str:
        return (
            f"<ModelParams layers={len(self.layers)} channels={self.channels}"
            f" rank={self.rank} parameters={self.num_parameters}>"
        )

    @classmethod
    def initialize(cls, config: ModelConfig, rng: np.random.Generator) -> Self:
        chain = config.channel_chain
        last = len(chain) - 2
        layers = [
            ExchangeableLayer.initialize(
                c_in, c_out, rng, activation="identity" if i == last else "relu"
            )
            for i, (c_in, c_out) in enumerate(zip(chain, chain[1:]))
        ]
        f_u = FeedForward.initialize(config.ff_widths, rng)
        f_v = FeedForward.initialize(config.ff_widths, rng)
        return cls(layers, f_u, f_v, parameter(inverse_softplus(config.init_lambda)))

    @property
    def lam(self) -> Value:
        return softplus(self.lambda_raw)

    @property
    def rank(self) -> int:
        return self.f_u.out_width

    @property
    def channels(self) -> int:
        return self.layers[-1].c_out

    @property
    def num_parameters(self) -> int:
        return sum(v.tensor.size for v in self.named_parameters().values())

    def named_parameters(self) -> Dict[str, Value]:
        """
        Every trainable leaf in a fixed order, keyed by a dotted name
        (``exml.0.w``, ``f_u.2.b``, ``lambda_raw``, ...).
        """
        named: Dict[str, Value] = {}
        for i, layer in enumerate(self.layers):
            for key, value in layer.parameters().items():
                named[f"exml.{i}.{key}"] = value
        for prefix, network in (("f_u", self.f_u), ("f_v", self.f_v)):
            for key, value in network.parameters().items():
                named[f"{prefix}.{key}"] = value
        named["lambda_raw"] = self.lambda_raw
        return named

    def state_dict(self) -> Dict[str, Tensor]:
        return {name: value.tensor.copy() for name, value in self.named_parameters().items()}

    def load_state_dict(self, state: Mapping[str, Tensor]) -> None:
        """
        Overwrite every parameter tensor in place.

        Raises:
            ContractError: if names or shapes differ from this model's.
        """
        named = self.named_parameters()
        if set(state) != set(named):
            missing = sorted(set(named) - set(state))
            extra = sorted(set(state) - set(named))
            raise ContractError(f"parameter names differ; missing={missing} unexpected={extra}")
        for name, value in named.items():
            tensor = np.asarray(state[name], dtype=np.float64)
            if tensor.shape != value.shape:
                raise ContractError(f"{name}: expected shape {value.shape}, got {tensor.shape}")
            value.tensor = tensor.copy()

    @classmethod
    def from_state_dict(cls, config: ModelConfig, state: Mapping[str, Tensor]) -> Self:
        params = cls.initialize(config, np.random.default_rng(0))
        params.load_state_dict(state)
        return params

    def copy(self) -> Self:
        """
        Fresh leaves holding copies of every tensor, with no gradients.
        """
        layers = [
            ExchangeableLayer(parameter(layer.w.tensor), parameter(layer.bias.tensor), layer.activation)
            for layer in self.layers
        ]

        def clone(network: FeedForward) -> FeedForward:
            return FeedForward(
                [parameter(w.tensor) for w in network.weights],
                [parameter(b.tensor) for b in network.biases],
            )

        return type(self)(layers, clone(self.f_u), clone(self.f_v), parameter(self.lambda_raw.tensor))

    def gradients(self) -> Dict[str, Tensor]:
        """
        Current gradient of every parameter; zeros where none was accumulated.
        """
        return {
            name: value.grad if value.grad is not None else np.zeros_like(value.tensor)
            for name, value in self.named_parameters().items()
        }

    def zero_grad(self) -> None:
        zero_grad(self.named_parameters().values())


def _check_matrix(X: Tensor, B: Tensor) -> None:
    if X.ndim != 2 or X.shape != B.shape:
        raise DimensionError(f"values {X.shape} and mask {B.shape} must be equal matrices")


def map_objective(X: Tensor, B: Tensor, fp: FactorPair, lam: Value) -> Value:
    """
    Negative log-posterior up to constants:
    ``sum(B * (U V^T - X)^2) + lam * (|U - U0|^2 + |V - V0|^2)``.
    """
    X = np.asarray(X, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    _check_matrix(X, B)
    residual = (fp.U @ fp.V.T - X) * B
    prior = (fp.U - fp.U0).square().sum() + (fp.V - fp.V0).square().sum()
    return residual.square().sum() + lam * prior


def adapt_step(X: Tensor, B: Tensor, fp: FactorPair, lam: Value, eta: float) -> FactorPair:
    """
    One simultaneous update of both factors, both computed from the current
    ``U`` and ``V``:

    .. code-block:: text

        U <- U - eta * (R V   + lam (U - U0))
        V <- V - eta * (R^T U + lam (V - V0))

    where ``R = B * (U V^T - X)``. The returned factors stay in the graph.
    """
    residual = (fp.U @ fp.V.T - X) * B
    grad_u = residual @ fp.V + lam * (fp.U - fp.U0)
    grad_v = residual.T @ fp.U + lam * (fp.V - fp.V0)
    return FactorPair(fp.U - eta * grad_u, fp.V - eta * grad_v, fp.U0, fp.V0)


def model_forward(
    X: Tensor,
    B: Tensor,
    params: ModelParams,
    cfg: AdaptConfig,
    mode: Mode = "eval",
    rng: Optional[np.random.Generator] = None,
    dropout: float = 0.0,
) -> FactorPair:
    """
    Infer prior means from ``(X, B)`` and adapt them with ``cfg.inner_steps``
    gradient steps.

    Args:
        X: Observed values; entries where ``B == 0`` are ignored.
        B: Binary observation mask.
        params: Model parameters.
        cfg: Step size and number of steps.
        mode: ``"train"`` enables dropout; ``"eval"`` never drops.
        rng: Random generator for dropout (needed in train mode with ``dropout > 0``).
        dropout: Dropout rate used in train mode.

    Raises:
        ContractError: for an empty matrix or a non-binary mask.
    """
    X = np.asarray(X, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    _check_matrix(X, B)
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise ContractError(f"cannot impute an empty {X.shape} matrix")
    if not np.isin(B, (0.0, 1.0)).all():
        raise ContractError("mask entries must be 0 or 1")

    spec = DropoutSpec(rate=dropout, enabled=mode == "train")
    z = exml_stack(X, B, params.layers, spec, rng)
    u0, v0 = prior_means(z, params.f_u, params.f_v, spec, rng)
    fp = FactorPair.from_priors(u0, v0)
    if cfg.inner_steps == 0:
        return fp
    lam = params.lam
    masked = X * B
    for _ in range(cfg.inner_steps):
        fp = adapt_step(masked, B, fp, lam, cfg.eta)
    return fp


def predict(fp: FactorPair) -> Tensor:
    """
    Predicted value of every entry, observed or not: ``U V^T``.
    """
    return fp.U.tensor @ fp.V.tensor.T


def episode_loss(X_test: Tensor, B_test: Tensor, fp: FactorPair) -> Value:
    """
    Mean squared error over the entries marked in ``B_test``.

    Raises:
        ContractError: if ``B_test`` marks no entry.
    """
    X_test = np.asarray(X_test, dtype=np.float64)
    B_test = np.asarray(B_test, dtype=np.float64)
    _check_matrix(X_test, B_test)
    count = float(B_test.sum())
    if count == 0:
        raise ContractError("test mask has no observed entry")
    residual = (fp.U @ fp.V.T - X_test) * B_test
    return residual.square().sum() / count


def impute(X: Tensor, B: Tensor, params: ModelParams, cfg: AdaptConfig) -> Tensor:
    """
    Eval-mode forward followed by :func:`predict`.
    """
    return predict(model_forward(X, B, params, cfg, mode="eval"))
