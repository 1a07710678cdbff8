"""
Rating matrices, dataset splits with disjoint users and items, and the
episodes meta-training and evaluation run on.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from typing_extensions import Self

from metaimpute.data.formats import EntityId, Triplet
from metaimpute.exceptions import (
    ConfigurationError,
    ContractError,
    PartitionError,
    SamplingError,
)
from metaimpute.models import SplitInfo
from metaimpute.models.config import check_fractions
from metaimpute.ndgrad import Tensor
from metaimpute.utils import STREAM_PARTITION, rng_stream

logger = logging.getLogger(__name__)

#: Attempts before :func:`sample_episode` gives up on finding nonempty masks.
MAX_SAMPLING_RETRIES = 100

ROLES = ("train", "valid", "test")


def _id_key(entity: EntityId) -> Tuple[bool, Union[int, str]]:
    # integers sort before strings; never compares across types
    return (isinstance(entity, str), entity)


def _is_binary(mask: Tensor) -> bool:
    return bool(np.isin(mask, (0.0, 1.0)).all())


@dataclass
class RatingMatrix:
    """
    Dense values with a binary observation mask. Unobserved entries hold 0.
    """

    values: Tensor
    mask: Tensor
    row_ids: List[EntityId] = field(default_factory=list)
    col_ids: List[EntityId] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape != self.mask.shape:
            raise ContractError(
                f"values {self.values.shape} and mask {self.mask.shape} must be equal matrices"
            )
        if not _is_binary(self.mask):
            raise ContractError("mask entries must be 0 or 1")
        if np.any(self.values[self.mask == 0] != 0):
            raise ContractError("unobserved entries must hold 0")
        if not self.row_ids:
            self.row_ids = list(range(self.n_rows))
        if not self.col_ids:
            self.col_ids = list(range(self.n_cols))
        if len(self.row_ids) != self.n_rows or len(self.col_ids) != self.n_cols:
            raise ContractError("row/column ids do not match the matrix shape")

    def __repr__(self) -> str:
        return f"<RatingMatrix {self.n_rows}x{self.n_cols} observed={self.n_observed}>"

    @classmethod
    def from_triplets(cls, triplets: Iterable[Triplet]) -> Self:
        """
        Build a matrix from ``(row_id, col_id, value)`` triplets. Ids are
        kept in sorted order; for duplicate pairs the last value wins.
        """
        cells: Dict[Tuple[EntityId, EntityId], float] = {}
        for user, item, rating in triplets:
            cells[(user, item)] = float(rating)
        row_ids = sorted({user for user, _ in cells}, key=_id_key)
        col_ids = sorted({item for _, item in cells}, key=_id_key)
        row_index = {entity: i for i, entity in enumerate(row_ids)}
        col_index = {entity: j for j, entity in enumerate(col_ids)}
        values = np.zeros((len(row_ids), len(col_ids)))
        mask = np.zeros_like(values)
        for (user, item), rating in cells.items():
            i, j = row_index[user], col_index[item]
            values[i, j] = rating
            mask[i, j] = 1.0
        return cls(values, mask, row_ids, col_ids)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.values.shape[0], self.values.shape[1])

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    def observed(self) -> Tensor:
        """
        Observed values in row-major order.
        """
        return self.values[self.mask == 1]

    def triplets(self) -> List[Triplet]:
        rows, cols = np.nonzero(self.mask)
        return [
            (self.row_ids[i], self.col_ids[j], float(self.values[i, j]))
            for i, j in zip(rows.tolist(), cols.tolist())
        ]

    def submatrix(self, rows: Sequence[int], cols: Sequence[int]) -> Self:
        index = np.ix_(np.asarray(rows, dtype=np.intp), np.asarray(cols, dtype=np.intp))
        return type(self)(
            self.values[index].copy(),
            self.mask[index].copy(),
            [self.row_ids[i] for i in rows],
            [self.col_ids[j] for j in cols],
        )

    def normalized(self, mean: float, std: float) -> Self:
        return type(self)(
            normalize(self.values, mean, std) * self.mask,
            self.mask.copy(),
            list(self.row_ids),
            list(self.col_ids),
        )


def normalize(values: Tensor, mean: float, std: float) -> Tensor:
    return (np.asarray(values, dtype=np.float64) - mean) / std


def denormalize(values: Tensor, mean: float, std: float) -> Tensor:
    return np.asarray(values, dtype=np.float64) * std + mean


@dataclass
class DatasetSplit:
    """
    Meta-training, meta-validation and meta-test blocks of one or more
    datasets, normalized with statistics taken from the meta-training blocks.
    Blocks of different roles share no user and no item.
    """

    train_blocks: List[RatingMatrix]
    valid_blocks: List[RatingMatrix]
    test_blocks: List[RatingMatrix]
    norm_mean: float = 0.0
    norm_std: float = 1.0
    name: str = ""

    def __post_init__(self) -> None:
        if not (self.norm_std > 0):
            raise ConfigurationError(f"norm_std must be positive, got {self.norm_std}")
        for role in ROLES:
            if not self.blocks(role):
                raise PartitionError(f"split has no {role} block")

    def __repr__(self) -> str:
        sizes = "/".join(str(len(self.blocks(role))) for role in ROLES)
        return f"<DatasetSplit {self.name or '?'} blocks={sizes}>"

    @classmethod
    def from_blocks(
        cls,
        train: RatingMatrix,
        valid: RatingMatrix,
        test: RatingMatrix,
        norm_mean: float = 0.0,
        norm_std: float = 1.0,
        name: str = "",
    ) -> Self:
        return cls([train], [valid], [test], norm_mean, norm_std, name)

    def blocks(self, role: str) -> List[RatingMatrix]:
        if role not in ROLES:
            raise ContractError(f"unknown block role {role!r}")
        return getattr(self, f"{role}_blocks")

    @property
    def train_block(self) -> RatingMatrix:
        return self.train_blocks[0]

    @property
    def valid_block(self) -> RatingMatrix:
        return self.valid_blocks[0]

    @property
    def test_block(self) -> RatingMatrix:
        return self.test_blocks[0]

    def normalize(self, values: Tensor) -> Tensor:
        return normalize(values, self.norm_mean, self.norm_std)

    def denormalize(self, values: Tensor) -> Tensor:
        return denormalize(values, self.norm_mean, self.norm_std)

    def check_disjoint(self) -> None:
        """
        Raises:
            PartitionError: if a user or item id appears in blocks of two roles.
        """
        for axis in ("row_ids", "col_ids"):
            seen: Dict[EntityId, str] = {}
            for role in ROLES:
                for block in self.blocks(role):
                    for entity in getattr(block, axis):
                        if seen.setdefault(entity, role) != role:
                            raise PartitionError(
                                f"{axis[:3]} {entity!r} appears in {seen[entity]} and {role} blocks"
                            )

    def info(self, seed: int = 0, fractions: Tuple[float, float, float] = (0.7, 0.1, 0.2)) -> SplitInfo:
        return SplitInfo(
            name=self.name,
            seed=seed,
            fractions=fractions,
            norm_mean=self.norm_mean,
            norm_std=self.norm_std,
            train_blocks=len(self.train_blocks),
            valid_blocks=len(self.valid_blocks),
            test_blocks=len(self.test_blocks),
        )


def partition_counts(total: int, fractions: Tuple[float, float, float]) -> Tuple[int, int, int]:
    """
    Floor the first two shares and give the remainder to the last.

    >>> partition_counts(10, (0.7, 0.1, 0.2))
    (7, 1, 2)
    """
    first = int(math.floor(total * fractions[0] + 1e-9))
    second = int(math.floor(total * fractions[1] + 1e-9))
    return (first, second, total - first - second)


def assign_roles(
    ids: Sequence[EntityId],
    fractions: Tuple[float, float, float],
    rng: np.random.Generator,
) -> Dict[EntityId, str]:
    """
    Randomly assign each id to a role according to ``fractions``.
    """
    counts = partition_counts(len(ids), fractions)
    order = rng.permutation(len(ids))
    roles: Dict[EntityId, str] = {}
    start = 0
    for role, count in zip(ROLES, counts):
        for position in order[start : start + count]:
            roles[ids[position]] = role
        start += count
    return roles


def partition_and_normalize(
    triplets: Sequence[Triplet],
    fractions: Tuple[float, float, float] = (0.7, 0.1, 0.2),
    seed: Union[int, np.random.Generator] = 0,
    name: str = "",
) -> DatasetSplit:
    """
    Partition users and items independently by ``fractions`` and keep, per
    block, the ratings whose user and item both belong to it. Ratings are
    z-scored with the mean and (population) standard deviation of the
    meta-training block.

    Args:
        triplets: Raw ``(user, item, rating)`` triplets.
        fractions: Shares of meta-training, meta-validation and meta-test.
        seed: Seed or random generator for the assignment.
        name: Dataset name recorded on the split.

    Raises:
        PartitionError: if a block receives no rating or the meta-training
            ratings are constant.
    """
    check_fractions(fractions)
    rng = seed if isinstance(seed, np.random.Generator) else rng_stream(seed, STREAM_PARTITION)
    users = sorted({user for user, _, _ in triplets}, key=_id_key)
    items = sorted({item for _, item, _ in triplets}, key=_id_key)
    user_roles = assign_roles(users, fractions, rng)
    item_roles = assign_roles(items, fractions, rng)

    per_role: Dict[str, List[Triplet]] = {role: [] for role in ROLES}
    for user, item, rating in triplets:
        role = user_roles[user]
        if item_roles[item] == role:
            per_role[role].append((user, item, rating))
    for role in ROLES:
        if not per_role[role]:
            raise PartitionError(f"{role} block has no ratings; try another seed")

    raw = {role: RatingMatrix.from_triplets(per_role[role]) for role in ROLES}
    train_ratings = raw["train"].observed()
    mean = float(train_ratings.mean())
    std = float(train_ratings.std())
    if std == 0:
        raise PartitionError("meta-training ratings are constant and cannot be normalized")

    split = DatasetSplit(
        [raw["train"].normalized(mean, std)],
        [raw["valid"].normalized(mean, std)],
        [raw["test"].normalized(mean, std)],
        norm_mean=mean,
        norm_std=std,
        name=name,
    )
    logger.info(
        "Partitioned %d users / %d items: %s (mean %.4f, std %.4f)",
        len(users),
        len(items),
        ", ".join(f"{role} {raw[role].n_rows}x{raw[role].n_cols} ({raw[role].n_observed})" for role in ROLES),
        mean,
        std,
    )
    return split


@dataclass
class Episode:
    """
    A sampled submatrix whose observed entries are split into an adaptation
    part (``X``, ``B``) and an evaluation part (``Xp``, ``Bp``).
    """

    X: Tensor
    B: Tensor
    Xp: Tensor
    Bp: Tensor

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=np.float64)
        self.B = np.asarray(self.B, dtype=np.float64)
        self.Xp = np.asarray(self.Xp, dtype=np.float64)
        self.Bp = np.asarray(self.Bp, dtype=np.float64)
        shapes = {a.shape for a in (self.X, self.B, self.Xp, self.Bp)}
        if len(shapes) != 1 or self.X.ndim != 2:
            raise ContractError(f"episode matrices must share one 2-D shape, got {shapes}")
        if not (_is_binary(self.B) and _is_binary(self.Bp)):
            raise ContractError("episode masks must be binary")
        if np.any(self.B * self.Bp):
            raise ContractError("training and test masks overlap")

    def __repr__(self) -> str:
        n, m = self.shape
        return f"<Episode {n}x{m} train={self.n_train} test={self.n_test}>"

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.X.shape[0], self.X.shape[1])

    @property
    def n_train(self) -> int:
        return int(self.B.sum())

    @property
    def n_test(self) -> int:
        return int(self.Bp.sum())

    def permuted(self, rows: Sequence[int], cols: Sequence[int]) -> Self:
        index = np.ix_(np.asarray(rows, dtype=np.intp), np.asarray(cols, dtype=np.intp))
        return type(self)(self.X[index], self.B[index], self.Xp[index], self.Bp[index])


def _sample_positions(
    block: RatingMatrix, n_rows: int, n_cols: int, rng: np.random.Generator
) -> RatingMatrix:
    if n_rows < 1 or n_cols < 1:
        raise ContractError(f"episode size must be positive, got {n_rows}x{n_cols}")
    if block.n_rows < n_rows or block.n_cols < n_cols:
        raise ContractError(
            f"cannot sample {n_rows}x{n_cols} from a {block.n_rows}x{block.n_cols} block"
        )
    rows = rng.choice(block.n_rows, size=n_rows, replace=False)
    cols = rng.choice(block.n_cols, size=n_cols, replace=False)
    return block.submatrix(rows.tolist(), cols.tolist())


def sample_episode(
    block: RatingMatrix,
    n_rows: int,
    n_cols: int,
    train_ratio: float,
    rng: np.random.Generator,
    max_retries: int = MAX_SAMPLING_RETRIES,
) -> Episode:
    """
    Sample ``n_rows`` distinct rows and ``n_cols`` distinct columns uniformly
    and send each observed entry of the submatrix to the training mask with
    probability ``train_ratio``, otherwise to the test mask. Resamples until
    both masks are nonempty.

    Raises:
        ConfigurationError: if ``train_ratio`` is not in (0, 1).
        ContractError: if the block is smaller than the episode.
        SamplingError: if ``max_retries`` attempts all produced an empty mask.
    """
    if not 0.0 < train_ratio < 1.0:
        raise ConfigurationError(f"train ratio must be in (0, 1), got {train_ratio}")
    for attempt in range(max_retries):
        sub = _sample_positions(block, n_rows, n_cols, rng)
        observed = sub.mask == 1
        to_train = (rng.random(sub.shape) < train_ratio) & observed
        to_test = observed & ~to_train
        if to_train.any() and to_test.any():
            B = to_train.astype(np.float64)
            Bp = to_test.astype(np.float64)
            return Episode(sub.values * B, B, sub.values * Bp, Bp)
        logger.debug("Episode attempt %d had an empty mask; resampling", attempt + 1)
    raise SamplingError(
        f"no {n_rows}x{n_cols} episode with nonempty masks after {max_retries} attempts"
    )


def holdout_split(
    sub: RatingMatrix, holdout: float, rng: np.random.Generator
) -> Optional[Episode]:
    """
    Keep exactly ``round(|obs| * (1 - holdout))`` observed entries (at least
    one, and at least one held out) for adaptation and hold out the rest.
    Returns ``None`` when the submatrix has fewer than two observed entries.
    """
    positions = np.flatnonzero(sub.mask)
    if positions.size < 2:
        return None
    keep = int(math.floor(positions.size * (1.0 - holdout) + 0.5))
    keep = min(max(keep, 1), positions.size - 1)
    chosen = rng.permutation(positions)[:keep]
    B = np.zeros(sub.mask.size)
    B[chosen] = 1.0
    B = B.reshape(sub.shape)
    Bp = sub.mask - B
    return Episode(sub.values * B, B, sub.values * Bp, Bp)


def make_meta_test_suite(
    blocks: Union[RatingMatrix, Sequence[RatingMatrix]],
    count: int = 10,
    n_rows: int = 30,
    n_cols: int = 30,
    holdout: float = 0.5,
    rng: Optional[np.random.Generator] = None,
    max_retries: int = MAX_SAMPLING_RETRIES,
) -> List[Episode]:
    """
    Build a fixed list of evaluation episodes. Each keeps half (by default)
    of its observed entries for adaptation and holds out the rest. With
    several blocks, episodes cycle through them in order.

    Raises:
        SamplingError: if a submatrix with two observed entries cannot be found.
    """
    if count < 1:
        raise ContractError(f"suite needs at least one episode, got {count}")
    if not 0.0 < holdout < 1.0:
        raise ConfigurationError(f"holdout must be in (0, 1), got {holdout}")
    pool = [blocks] if isinstance(blocks, RatingMatrix) else list(blocks)
    if not pool:
        raise ContractError("no block to build a suite from")
    rng = rng if rng is not None else np.random.default_rng(0)

    suite: List[Episode] = []
    for i in range(count):
        block = pool[i % len(pool)]
        for _ in range(max_retries):
            episode = holdout_split(_sample_positions(block, n_rows, n_cols, rng), holdout, rng)
            if episode is not None:
                suite.append(episode)
                break
        else:
            raise SamplingError(
                f"no {n_rows}x{n_cols} submatrix with two observed entries after {max_retries} attempts"
            )
    logger.debug("Built %d %dx%d evaluation episodes", count, n_rows, n_cols)
    return suite
