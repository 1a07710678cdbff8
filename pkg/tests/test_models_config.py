import pydantic
import pytest

from metaimpute.exceptions import ParseError
from metaimpute.models import AdaptConfig, MFConfig, ModelConfig, SplitInfo, TrainConfig


def test_defaults():
    cfg = TrainConfig()
    assert cfg.channels == 32
    assert cfg.exml_layers == 3
    assert cfg.rank == 32
    assert cfg.inner_steps == 10
    assert cfg.eta == 0.01
    assert (cfg.n_rows, cfg.n_cols) == (30, 30)
    assert cfg.train_ratio == 0.5
    assert cfg.outer_lr == 1e-4
    assert cfg.batch_size == 16
    assert cfg.dropout == 0.1


def test_derived_settings():
    cfg = TrainConfig(channels=4, exml_layers=2, hidden_units=6, ff_layers=3, rank=5, inner_steps=3)
    assert cfg.channel_chain == [1, 4, 4]
    assert cfg.ff_widths == [4, 6, 6, 5]
    assert isinstance(cfg.model_settings(), ModelConfig)
    assert cfg.model_settings().rank == 5
    assert cfg.adapt_settings() == AdaptConfig(eta=0.01, inner_steps=3)


def test_dashed_aliases():
    cfg = TrainConfig.model_validate({"inner-steps": 4, "n_rows": 12})
    assert cfg.inner_steps == 4
    assert cfg.n_rows == 12


@pytest.mark.parametrize(
    "changes",
    [
        {"train_ratio": 1.0},
        {"train_ratio": 0.0},
        {"dropout": 1.0},
        {"channels": 0},
        {"seed": -1},
        {"eta": 0.0},
        {"vary_size": True, "min_size": 40},
        {"colour": "blue"},
    ],
)
def test_invalid(changes):
    with pytest.raises(pydantic.ValidationError):
        TrainConfig.model_validate(changes)


def test_zero_eta_allowed_without_steps():
    assert AdaptConfig(eta=0.0, inner_steps=0).inner_steps == 0


def test_frozen():
    cfg = TrainConfig()
    with pytest.raises(pydantic.ValidationError):
        cfg.rank = 3  # type: ignore[misc]
    assert cfg.replace(rank=3).rank == 3
    assert cfg.rank == 32


def test_text_round_trip():
    cfg = TrainConfig(outer_lr=3e-4, vary_size=True, min_size=5, seed=11)
    text = cfg.to_text()
    assert "vary-size=true\n" in text
    assert TrainConfig.from_text(text) == cfg


def test_from_text_comments_and_errors():
    cfg = TrainConfig.from_text("# tiny run\n\nepochs = 5\nrank=4\n")
    assert (cfg.epochs, cfg.rank) == (5, 4)
    with pytest.raises(ParseError) as excinfo:
        TrainConfig.from_text("epochs=5\nrank\n", path="run.cfg")
    assert str(excinfo.value).startswith("run.cfg:2: ")


def test_mf_config_grid_from_text():
    cfg = MFConfig.from_text("weight-decays=0.1, 1\nlearning-rates=0.01\n")
    assert cfg.weight_decays == (0.1, 1.0)
    assert cfg.learning_rates == (0.01,)
    with pytest.raises(pydantic.ValidationError):
        MFConfig(weight_decays=())


def test_split_info_fractions():
    with pytest.raises(pydantic.ValidationError):
        SplitInfo(fractions=(0.5, 0.2, 0.2))
