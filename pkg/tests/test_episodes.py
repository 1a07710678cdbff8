import numpy as np
import pytest

from metaimpute.data.episodes import (
    DatasetSplit,
    Episode,
    RatingMatrix,
    assign_roles,
    holdout_split,
    make_meta_test_suite,
    partition_and_normalize,
    partition_counts,
    sample_episode,
)
from metaimpute.exceptions import (
    ConfigurationError,
    ContractError,
    PartitionError,
    SamplingError,
)
from metaimpute.testing import fake_rating_matrix


def test_rating_matrix_from_triplets():
    matrix = RatingMatrix.from_triplets([(2, "b", 1.0), (1, "a", 2.0), (2, "a", 3.0), (1, "a", 4.0)])
    assert matrix.row_ids == [1, 2]
    assert matrix.col_ids == ["a", "b"]
    np.testing.assert_array_equal(matrix.values, [[4.0, 0.0], [3.0, 1.0]])
    np.testing.assert_array_equal(matrix.mask, [[1.0, 0.0], [1.0, 1.0]])
    assert matrix.n_observed == 3
    assert sorted(matrix.triplets()) == [(1, "a", 4.0), (2, "a", 3.0), (2, "b", 1.0)]


def test_rating_matrix_mixed_ids_sort():
    matrix = RatingMatrix.from_triplets([("x", 1, 1.0), (3, 1, 1.0)])
    assert matrix.row_ids == [3, "x"]


def test_rating_matrix_validation():
    with pytest.raises(ContractError):
        RatingMatrix(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ContractError):
        RatingMatrix(np.zeros((2, 2)), np.full((2, 2), 0.5))
    with pytest.raises(ContractError):
        RatingMatrix(np.ones((2, 2)), np.eye(2))
    with pytest.raises(ContractError):
        RatingMatrix(np.zeros((2, 2)), np.eye(2), row_ids=[1])
    matrix = RatingMatrix(np.eye(2), np.eye(2))
    assert matrix.row_ids == [0, 1]


def test_submatrix_and_normalized(block):
    sub = block.submatrix([3, 1], [0, 4, 2])
    assert sub.shape == (2, 3)
    assert sub.row_ids == [3, 1]
    np.testing.assert_array_equal(sub.values, block.values[np.ix_([3, 1], [0, 4, 2])])
    normalized = block.normalized(0.5, 2.0)
    np.testing.assert_allclose(normalized.observed(), (block.observed() - 0.5) / 2.0)
    assert np.all(normalized.values[block.mask == 0] == 0)


def test_partition_counts():
    assert partition_counts(10, (0.7, 0.1, 0.2)) == (7, 1, 2)
    assert partition_counts(943, (0.7, 0.1, 0.2)) == (660, 94, 189)
    assert sum(partition_counts(7, (1 / 3, 1 / 3, 1 / 3))) == 7


def test_assign_roles(rng):
    roles = assign_roles(list(range(10)), (0.7, 0.1, 0.2), rng)
    assert sorted(roles) == list(range(10))
    assert [list(roles.values()).count(r) for r in ("train", "valid", "test")] == [7, 1, 2]


def test_partition_and_normalize(triplets):
    split = partition_and_normalize(triplets, seed=3, name="fake")
    split.check_disjoint()
    assert split.name == "fake"
    users = {u for u, _, _ in triplets}
    seen = set().union(*(set(b.row_ids) for b in split.train_blocks + split.valid_blocks + split.test_blocks))
    assert seen <= users
    # normalization comes from the meta-training block
    train = split.train_block.observed()
    assert train.mean() == pytest.approx(0.0, abs=1e-12)
    assert train.std() == pytest.approx(1.0)
    raw = np.array([r for u, i, r in triplets if u in set(split.train_block.row_ids) and i in set(split.train_block.col_ids)])
    assert split.norm_mean == pytest.approx(raw.mean())
    np.testing.assert_allclose(split.denormalize(split.normalize(raw)), raw)


def test_partition_is_reproducible(triplets):
    a = partition_and_normalize(triplets, seed=8)
    b = partition_and_normalize(triplets, seed=8)
    c = partition_and_normalize(triplets, seed=9)
    assert a.test_block.row_ids == b.test_block.row_ids
    assert a.test_block.row_ids != c.test_block.row_ids


def test_partition_empty_block():
    with pytest.raises(PartitionError):
        partition_and_normalize([(1, 1, 1.0), (2, 2, 2.0)], seed=0)


def test_partition_constant_ratings():
    triplets = [(u, i, 3.0) for u in range(30) for i in range(30)]
    with pytest.raises(PartitionError, match="constant"):
        partition_and_normalize(triplets, seed=0)


def test_partition_bad_fractions(triplets):
    with pytest.raises(ConfigurationError):
        partition_and_normalize(triplets, fractions=(0.5, 0.1, 0.1))


def test_split_validation(block):
    with pytest.raises(ConfigurationError):
        DatasetSplit.from_blocks(block, block, block, norm_std=0.0)
    with pytest.raises(PartitionError):
        DatasetSplit([block], [], [block])
    with pytest.raises(ContractError):
        DatasetSplit.from_blocks(block, block, block).blocks("holdout")


def test_check_disjoint(block):
    split = DatasetSplit.from_blocks(block, block, block)
    with pytest.raises(PartitionError):
        split.check_disjoint()


def test_split_info(split):
    info = split.info(seed=4)
    assert info.seed == 4
    assert info.train_blocks == 1
    assert info.name == "fake"


def test_episode_validation():
    B = np.array([[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ContractError):
        Episode(B, B, B, B)
    with pytest.raises(ContractError):
        Episode(B, B, np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ContractError):
        Episode(B, B * 0.5, B, 1 - B)
    episode = Episode(B, B, 1 - B, 1 - B)
    assert episode.n_train == 2 and episode.n_test == 2
    assert episode.shape == (2, 2)


def test_sample_episode(block, rng):
    episode = sample_episode(block, 5, 4, 0.5, rng)
    assert episode.shape == (5, 4)
    assert episode.n_train > 0 and episode.n_test > 0
    assert not np.any(episode.B * episode.Bp)
    assert np.all(episode.X[episode.B == 0] == 0)
    assert np.all(episode.Xp[episode.Bp == 0] == 0)
    # every entry comes from the block
    values = set(block.observed().tolist())
    assert set(episode.X[episode.B == 1].tolist()) <= values


def test_sample_episode_full_block_keeps_every_rating(block, rng):
    episode = sample_episode(block, block.n_rows, block.n_cols, 0.5, rng)
    assert episode.n_train + episode.n_test == block.n_observed


def test_sample_episode_is_reproducible(block):
    a = sample_episode(block, 5, 5, 0.5, np.random.default_rng(1))
    b = sample_episode(block, 5, 5, 0.5, np.random.default_rng(1))
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.Bp, b.Bp)


def test_sample_episode_errors(block, rng):
    with pytest.raises(ConfigurationError):
        sample_episode(block, 3, 3, 1.0, rng)
    with pytest.raises(ContractError):
        sample_episode(block, block.n_rows + 1, 3, 0.5, rng)
    single = RatingMatrix(np.eye(3), np.eye(3))
    with pytest.raises(SamplingError):
        sample_episode(single, 1, 1, 0.5, rng, max_retries=5)


def test_holdout_split_counts(rng):
    sub = fake_rating_matrix(5, 5, density=1.0, seed=1)
    episode = holdout_split(sub, 0.5, rng)
    assert episode.n_train == 13  # round(25 * 0.5) with half rounding up
    assert episode.n_test == 12
    assert holdout_split(RatingMatrix(np.eye(2) * 0, np.zeros((2, 2))), 0.5, rng) is None


def test_holdout_split_keeps_one_on_each_side(rng):
    sub = RatingMatrix(np.array([[1.0, 2.0]]), np.ones((1, 2)))
    for holdout in (0.01, 0.99):
        episode = holdout_split(sub, holdout, rng)
        assert (episode.n_train, episode.n_test) == (1, 1)


def test_make_meta_test_suite(block):
    suite = make_meta_test_suite(block, count=4, n_rows=5, n_cols=5, rng=np.random.default_rng(0))
    again = make_meta_test_suite(block, count=4, n_rows=5, n_cols=5, rng=np.random.default_rng(0))
    assert len(suite) == 4
    for a, b in zip(suite, again):
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.Bp, b.Bp)
        assert a.n_train > 0 and a.n_test > 0


def test_make_meta_test_suite_cycles_blocks():
    first = fake_rating_matrix(4, 4, density=1.0, seed=0)
    second = RatingMatrix(first.values + 100.0, first.mask)
    suite = make_meta_test_suite([first, second], count=3, n_rows=2, n_cols=2, rng=np.random.default_rng(0))
    assert (suite[0].X + suite[0].Xp).max() < 50
    assert (suite[1].X + suite[1].Xp).min() > 50
    assert (suite[2].X + suite[2].Xp).max() < 50


def test_make_meta_test_suite_errors(block):
    with pytest.raises(ContractError):
        make_meta_test_suite(block, count=0)
    with pytest.raises(ConfigurationError):
        make_meta_test_suite(block, holdout=1.0)
    with pytest.raises(ContractError):
        make_meta_test_suite([], count=1)
    with pytest.raises(SamplingError):
        make_meta_test_suite(RatingMatrix(np.eye(3), np.eye(3)), n_rows=1, n_cols=1, max_retries=3)
