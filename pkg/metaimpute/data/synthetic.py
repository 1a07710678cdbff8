"""
A family of small low-rank matrices with shared structure, for checking that
meta-training learns something without downloading data.

Every task draws its row factors around a common set of row prototypes and
its column factors around a common set of column prototypes, so tasks share
no rows or columns but look alike statistically.
"""

import logging
from typing import List, Tuple

import numpy as np

from metaimpute.data.episodes import DatasetSplit, RatingMatrix, partition_counts
from metaimpute.exceptions import ConfigurationError, PartitionError
from metaimpute.models.config import check_fractions
from metaimpute.utils import STREAM_SYNTHETIC, rng_stream

logger = logging.getLogger(__name__)


def generate_task_family(
    count: int = 200,
    n_rows: int = 30,
    n_cols: int = 30,
    rank: int = 3,
    noise: float = 0.1,
    observed: float = 0.3,
    prototypes: int = 4,
    spread: float = 0.3,
    seed: int = 0,
) -> List[RatingMatrix]:
    """
    Generate ``count`` matrices ``u_n^T v_m + e`` with ``e ~ N(0, noise^2)``,
    each entry observed with probability ``observed``.

    Args:
        count: Number of tasks.
        n_rows: Rows per task.
        n_cols: Columns per task.
        rank: Dimension of the generating factors.
        noise: Standard deviation of the observation noise.
        observed: Probability that an entry is observed.
        prototypes: Number of row (and column) prototypes shared by all tasks.
        spread: Standard deviation of a factor around its prototype.
        seed: Random seed.
    """
    if count < 1 or n_rows < 1 or n_cols < 1 or rank < 1 or prototypes < 1:
        raise ConfigurationError("task family sizes must be positive")
    if not 0.0 < observed <= 1.0:
        raise ConfigurationError(f"observed share must be in (0, 1], got {observed}")
    rng = rng_stream(seed, STREAM_SYNTHETIC)
    row_centers = rng.normal(size=(prototypes, rank)) / np.sqrt(rank) * 1.5
    col_centers = rng.normal(size=(prototypes, rank)) / np.sqrt(rank) * 1.5

    # zero padding keeps sorted ids in generation order
    width, row_width, col_width = (len(str(size - 1)) for size in (count, n_rows, n_cols))
    tasks: List[RatingMatrix] = []
    for task in range(count):
        U = row_centers[rng.integers(prototypes, size=n_rows)]
        U = U + spread * rng.normal(size=U.shape)
        V = col_centers[rng.integers(prototypes, size=n_cols)]
        V = V + spread * rng.normal(size=V.shape)
        values = U @ V.T + noise * rng.normal(size=(n_rows, n_cols))
        mask = rng.random((n_rows, n_cols)) < observed
        # every row and column keeps at least one observed entry
        for n in np.flatnonzero(~mask.any(axis=1)):
            mask[n, rng.integers(n_cols)] = True
        for m in np.flatnonzero(~mask.any(axis=0)):
            mask[rng.integers(n_rows), m] = True
        mask = mask.astype(np.float64)
        tasks.append(
            RatingMatrix(
                values * mask,
                mask,
                [f"t{task:0{width}d}r{n:0{row_width}d}" for n in range(n_rows)],
                [f"t{task:0{width}d}c{m:0{col_width}d}" for m in range(n_cols)],
            )
        )
    logger.info("Generated %d synthetic %dx%d tasks of rank %d", count, n_rows, n_cols, rank)
    return tasks


def make_synthetic_split(
    tasks: List[RatingMatrix],
    fractions: Tuple[float, float, float] = (0.7, 0.1, 0.2),
    name: str = "synthetic",
) -> DatasetSplit:
    """
    Assign whole tasks to meta-training, meta-validation and meta-test in
    order, then z-score everything with the meta-training ratings.

    Raises:
        PartitionError: if a role receives no task.
    """
    check_fractions(fractions)
    counts = partition_counts(len(tasks), fractions)
    if min(counts) < 1:
        raise PartitionError(f"{len(tasks)} tasks cannot fill every role of {fractions}")
    train = tasks[: counts[0]]
    valid = tasks[counts[0] : counts[0] + counts[1]]
    test = tasks[counts[0] + counts[1] :]

    ratings = np.concatenate([task.observed() for task in train])
    mean = float(ratings.mean())
    std = float(ratings.std())
    if std == 0:
        raise PartitionError("meta-training ratings are constant and cannot be normalized")
    return DatasetSplit(
        [task.normalized(mean, std) for task in train],
        [task.normalized(mean, std) for task in valid],
        [task.normalized(mean, std) for task in test],
        norm_mean=mean,
        norm_std=std,
        name=name,
    )
