"""
metaimpute provides a few helpers for testing code that builds on it:
small random rating matrices, episodes and splits, and configurations
small enough to meta-train in well under a second.
"""

from typing import Any, List, Optional

import numpy as np

from metaimpute.data.episodes import DatasetSplit, Episode, RatingMatrix
from metaimpute.data.formats import Triplet
from metaimpute.models import ModelConfig, TrainConfig


def _rng(seed: Any) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def fake_triplets(
    users: int = 20,
    items: int = 20,
    density: float = 0.5,
    seed: Any = 0,
) -> List[Triplet]:
    """
    Integer ratings from 1 to 5 on a random ``density`` share of the
    ``users x items`` grid, with integer ids starting at 1.

    >>> len(fake_triplets(4, 5, density=1.0))
    20
    """
    rng = _rng(seed)
    return [
        (user, item, float(rng.integers(1, 6)))
        for user in range(1, users + 1)
        for item in range(1, items + 1)
        if rng.random() < density
    ]


def fake_rating_matrix(
    n_rows: int = 6,
    n_cols: int = 5,
    density: float = 0.6,
    seed: Any = 0,
) -> RatingMatrix:
    """
    Standard normal values on a random mask. Every row and column keeps at
    least one observed entry.
    """
    rng = _rng(seed)
    mask = rng.random((n_rows, n_cols)) < density
    mask[np.arange(n_rows), np.arange(n_rows) % n_cols] = True
    mask[np.arange(n_cols) % n_rows, np.arange(n_cols)] = True
    mask = mask.astype(np.float64)
    return RatingMatrix(rng.normal(size=(n_rows, n_cols)) * mask, mask)


def fake_episode(
    n_rows: int = 4,
    n_cols: int = 5,
    density: float = 0.8,
    seed: Any = 0,
) -> Episode:
    """
    An episode whose observed entries alternate between the training and the
    test mask, so both are nonempty whenever two entries are observed.
    """
    rng = _rng(seed)
    values = rng.normal(size=(n_rows, n_cols))
    observed = np.flatnonzero(rng.random(n_rows * n_cols) < density)
    if observed.size < 2:
        observed = np.arange(min(2, n_rows * n_cols))
    B = np.zeros(n_rows * n_cols)
    Bp = np.zeros(n_rows * n_cols)
    B[observed[0::2]] = 1.0
    Bp[observed[1::2]] = 1.0
    B = B.reshape(n_rows, n_cols)
    Bp = Bp.reshape(n_rows, n_cols)
    return Episode(values * B, B, values * Bp, Bp)


def fake_split(
    n_rows: int = 12,
    n_cols: int = 12,
    density: float = 0.6,
    seed: Any = 0,
    name: str = "fake",
) -> DatasetSplit:
    """
    A split with one already-normalized block per role. Ids are unique
    across roles.
    """
    rng = _rng(seed)
    blocks = []
    for role in ("train", "valid", "test"):
        block = fake_rating_matrix(n_rows, n_cols, density, rng)
        block.row_ids = [f"{role}-u{i:03d}" for i in range(n_rows)]
        block.col_ids = [f"{role}-i{j:03d}" for j in range(n_cols)]
        blocks.append(block)
    return DatasetSplit.from_blocks(*blocks, name=name)


def tiny_model_config(**changes: Any) -> ModelConfig:
    """
    Two exchangeable layers with 3 channels, prior networks 3 -> 4 -> 4 -> 2.
    """
    defaults = dict(channels=3, exml_layers=2, hidden_units=4, ff_layers=3, rank=2)
    return ModelConfig.model_validate({**defaults, **changes})


def tiny_train_config(seed: Optional[int] = 0, **changes: Any) -> TrainConfig:
    """
    A training configuration that runs a few epochs of 6x6 episodes in
    well under a second.
    """
    defaults = dict(
        channels=3,
        exml_layers=2,
        hidden_units=4,
        ff_layers=3,
        rank=2,
        inner_steps=2,
        eta=0.05,
        n_rows=6,
        n_cols=6,
        epochs=3,
        batches_per_epoch=2,
        batch_size=2,
        outer_lr=1e-2,
        valid_episodes=2,
        patience=10,
        min_size=3,
        seed=seed or 0,
    )
    return TrainConfig.model_validate({**defaults, **changes})
