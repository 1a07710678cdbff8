"""
Configuration models. Defaults reproduce the published setup: three
exchangeable layers with 32 channels, four-layer prior networks with 32 hidden
units and K=32, ten inner steps at learning rate 1e-2, 30x30 episodes with
training ratio 0.5, Adam at 1e-4 with batch size 16 and dropout 0.1.
"""

import math
from typing import List, Tuple

import pydantic
from typing_extensions import Self as SelfType

from metaimpute.exceptions import ConfigurationError
from metaimpute.models._base import ConfigModel

PositiveInt = pydantic.PositiveInt
NonNegativeInt = pydantic.NonNegativeInt
PositiveFloat = pydantic.PositiveFloat
NonNegativeFloat = pydantic.NonNegativeFloat
Probability = pydantic.confloat(ge=0.0, lt=1.0)
OpenUnitInterval = pydantic.confloat(gt=0.0, lt=1.0)


class ModelConfig(ConfigModel):
    """
    Architecture of the prior generator.
    """

    #: Channels of every exchangeable layer (the last one included).
    channels: PositiveInt = 32

    #: Number of exchangeable matrix layers.
    exml_layers: PositiveInt = 3

    #: Width of the hidden layers of the prior networks.
    hidden_units: PositiveInt = 32

    #: Weight layers per prior network (hidden layers + linear output).
    ff_layers: PositiveInt = 4

    #: Rank K of the factor matrices.
    rank: PositiveInt = 32

    #: Initial value of the prior precision.
    init_lambda: PositiveFloat = 1.0

    @property
    def channel_chain(self) -> List[int]:
        return [1] + [self.channels] * self.exml_layers

    @property
    def ff_widths(self) -> List[int]:
        return [self.channels] + [self.hidden_units] * (self.ff_layers - 1) + [self.rank]

    def model_settings(self) -> "ModelConfig":
        return ModelConfig.model_validate(
            {name: getattr(self, name) for name in ModelConfig.model_fields}
        )


class AdaptConfig(ConfigModel):
    """
    Gradient-descent steps of the MAP estimate.
    """

    #: Step size of each update.
    eta: NonNegativeFloat = 1e-2

    #: Number of updates; 0 predicts from the prior means alone.
    inner_steps: NonNegativeInt = 10

    @pydantic.model_validator(mode="after")
    def _positive_step(self) -> SelfType:
        if self.inner_steps > 0 and self.eta <= 0:
            raise ValueError("eta must be positive when inner-steps > 0")
        return self

    def adapt_settings(self) -> "AdaptConfig":
        return AdaptConfig(eta=self.eta, inner_steps=self.inner_steps)


class TrainConfig(ModelConfig, AdaptConfig):
    """
    Everything :func:`~metaimpute.training.metatrain.meta_train` needs.
    Model and adaptation settings are flattened in so that a single
    ``key=value`` block describes a run.
    """

    #: Number of epochs; each epoch is ``batches_per_epoch`` optimizer steps.
    epochs: NonNegativeInt = 1000
    batches_per_epoch: PositiveInt = 50
    batch_size: PositiveInt = 16
    outer_lr: PositiveFloat = 1e-4

    #: Episode size N x M.
    n_rows: PositiveInt = 30
    n_cols: PositiveInt = 30

    #: Probability that an observed entry goes to the episode's training mask.
    train_ratio: OpenUnitInterval = 0.5  # type: ignore[valid-type]

    dropout: Probability = 0.1  # type: ignore[valid-type]
    seed: NonNegativeInt = 0

    #: Epochs without validation improvement before stopping.
    patience: PositiveInt = 100

    #: Size of the fixed meta-validation suite.
    valid_episodes: PositiveInt = 10

    #: Draw N and M uniformly from [min_size, n_rows] x [min_size, n_cols] per batch.
    vary_size: bool = False
    min_size: PositiveInt = 10

    #: Threads used for the episodes of one batch.
    workers: PositiveInt = 1

    @pydantic.model_validator(mode="after")
    def _sizes(self) -> SelfType:
        if self.vary_size and (self.min_size > self.n_rows or self.min_size > self.n_cols):
            raise ValueError("min-size must not exceed rows/cols")
        return self


class MFConfig(ConfigModel):
    """
    Per-matrix factorization baseline and its hyperparameter grid.
    """

    rank: PositiveInt = 32
    weight_decays: Tuple[NonNegativeFloat, ...] = pydantic.Field(
        default=(1e-4, 1e-3, 1e-2, 1e-1, 1.0), min_length=1
    )
    learning_rates: Tuple[PositiveFloat, ...] = pydantic.Field(
        default=(1e-3, 1e-2, 1e-1), min_length=1
    )
    max_iterations: PositiveInt = 500
    tolerance: NonNegativeFloat = 1e-8
    init_scale: PositiveFloat = 0.1

    #: Share of observed entries held out to pick hyperparameters.
    valid_fraction: OpenUnitInterval = 0.2  # type: ignore[valid-type]
    seed: NonNegativeInt = 0


class SplitInfo(ConfigModel):
    """
    Metadata stored next to the blocks of a prepared dataset split.
    """

    name: str = ""
    seed: NonNegativeInt = 0
    fractions: Tuple[NonNegativeFloat, NonNegativeFloat, NonNegativeFloat] = (
        0.7,
        0.1,
        0.2,
    )
    norm_mean: float = 0.0
    norm_std: PositiveFloat = 1.0
    train_blocks: PositiveInt = 1
    valid_blocks: PositiveInt = 1
    test_blocks: PositiveInt = 1

    @pydantic.field_validator("fractions")
    @classmethod
    def _sum_to_one(
        cls, value: Tuple[float, float, float]
    ) -> Tuple[float, float, float]:
        if not math.isclose(sum(value), 1.0, abs_tol=1e-9):
            raise ValueError(f"fractions must sum to 1, got {sum(value)}")
        return value


def check_fractions(fractions: Tuple[float, float, float]) -> None:
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ConfigurationError(f"expected three non-negative fractions, got {fractions}")
    if not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ConfigurationError(f"fractions must sum to 1, got {sum(fractions)}")
