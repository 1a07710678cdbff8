from pathlib import Path
from typing import Callable

import numpy as np
import pytest
from click.testing import CliRunner

import metaimpute.cli
from metaimpute.data.episodes import Episode, RatingMatrix
from metaimpute.imputer import ModelParams
from metaimpute.models import AdaptConfig, ModelConfig, TrainConfig
from metaimpute.testing import (
    fake_episode,
    fake_rating_matrix,
    fake_split,
    fake_triplets,
    tiny_model_config,
    tiny_train_config,
)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def model_config() -> ModelConfig:
    return tiny_model_config()


@pytest.fixture
def params(model_config) -> ModelParams:
    return ModelParams.initialize(model_config, np.random.default_rng(0))


@pytest.fixture
def adapt() -> AdaptConfig:
    return AdaptConfig(eta=0.05, inner_steps=3)


@pytest.fixture
def train_config() -> TrainConfig:
    return tiny_train_config()


@pytest.fixture
def episode() -> Episode:
    return fake_episode(4, 5, seed=3)


@pytest.fixture
def block() -> RatingMatrix:
    return fake_rating_matrix(12, 10, density=0.6, seed=1)


@pytest.fixture
def split():
    return fake_split(seed=2)


@pytest.fixture
def triplets():
    return fake_triplets(40, 40, density=0.5, seed=4)


@pytest.fixture
def ratings_file(tmp_path, triplets) -> Path:
    """
    A MovieLens-style tab-separated ratings file.
    """
    path = tmp_path / "u.data"
    lines = [f"{u}\t{i}\t{int(r)}\t88125094{n % 10}" for n, (u, i, r) in enumerate(triplets)]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def run(monkeypatch) -> Callable[..., object]:
    """
    Invoke the command line and fail loudly unless the exit status is expected.
    """

    def _runner(*args: str, fails: bool = False):
        monkeypatch.delenv("MMF_SEED", raising=False)
        runner = CliRunner()
        result = runner.invoke(metaimpute.cli.cli, args)
        # if a test fails, show the command's output
        print(f"{result.output=}")
        if fails and result.exit_code == 0:
            raise RuntimeError("expected failure, but command succeeded")
        if result.exit_code != 0 and not fails:
            print(f"{result.exception=}")
            raise RuntimeError(f"command failed: {args}")
        return result

    return _runner
