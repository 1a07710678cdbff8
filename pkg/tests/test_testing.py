import numpy as np
import pytest

from metaimpute import testing as T


def test_fake_triplets():
    triplets = T.fake_triplets(4, 5, density=1.0)
    assert len(triplets) == 20
    assert {user for user, _, _ in triplets} == {1, 2, 3, 4}
    assert {item for _, item, _ in triplets} == {1, 2, 3, 4, 5}
    assert all(rating in (1.0, 2.0, 3.0, 4.0, 5.0) for _, _, rating in triplets)
    assert T.fake_triplets(seed=3) == T.fake_triplets(seed=3)


@pytest.mark.parametrize("shape", [(6, 5), (3, 9), (1, 1)])
def test_fake_rating_matrix(shape):
    block = T.fake_rating_matrix(*shape, density=0.0)
    assert block.shape == shape
    assert block.mask.sum(axis=0).min() >= 1
    assert block.mask.sum(axis=1).min() >= 1
    assert np.all(block.values[block.mask == 0] == 0)


def test_fake_episode():
    episode = T.fake_episode(4, 5, seed=1)
    assert episode.shape == (4, 5)
    assert episode.n_train >= 1
    assert episode.n_test >= 1
    assert np.all(episode.B * episode.Bp == 0)
    assert np.all(episode.X[episode.B == 0] == 0)
    assert np.all(episode.Xp[episode.Bp == 0] == 0)


def test_fake_episode__sparse():
    episode = T.fake_episode(2, 2, density=0.0)
    assert episode.n_train == 1
    assert episode.n_test == 1


def test_fake_split():
    split = T.fake_split(5, 4, name="demo")
    assert split.name == "demo"
    assert split.train_block.shape == (5, 4)
    assert split.valid_block.row_ids[0] == "valid-u000"
    assert split.test_block.col_ids[-1] == "test-i003"
    split.check_disjoint()


def test_tiny_model_config():
    config = T.tiny_model_config(rank=3)
    assert config.ff_widths == [3, 4, 4, 3]
    assert config.channel_chain == [1, 3, 3]


def test_tiny_train_config():
    config = T.tiny_train_config(seed=None, epochs=1)
    assert config.seed == 0
    assert config.epochs == 1
    assert config.inner_steps == 2
    assert T.tiny_train_config(seed=5).seed == 5
