import numpy as np
import pytest

from metaimpute.baselines import (
    mean_predict,
    mf_descent,
    mf_fit,
    mf_objective,
    mf_predict,
    prior_product_predict,
)
from metaimpute.data.episodes import make_meta_test_suite
from metaimpute.exceptions import ContractError, ConvergenceError
from metaimpute.imputer import impute
from metaimpute.models import AdaptConfig, MFConfig


@pytest.fixture
def low_rank(rng):
    U = rng.normal(size=(8, 2))
    V = rng.normal(size=(7, 2))
    X = U @ V.T
    B = (rng.random(X.shape) < 0.7).astype(float)
    return X, B


@pytest.fixture
def mf_config():
    return MFConfig(rank=2, max_iterations=300, weight_decays=(1e-3, 1e-1), learning_rates=(1e-2, 5e-2))


def test_mf_descent_never_increases_objective(low_rank, rng):
    X, B = low_rank
    previous = np.inf
    for iterations in (1, 5, 25, 100):
        result = mf_descent(X * B, B, 2, 1e-2, 0.5, max_iterations=iterations, rng=np.random.default_rng(0))
        assert result.objective <= previous
        previous = result.objective
    assert result.finite


def test_mf_descent_fits_low_rank(low_rank):
    X, B = low_rank
    result = mf_descent(X * B, B, 2, 1e-4, 0.05, max_iterations=3000, tolerance=0, rng=np.random.default_rng(1))
    assert mf_objective(X * B, B, result.U, result.V, 0.0) < 0.1 * (B * X**2).sum()


def test_mf_fit_shapes_and_determinism(low_rank, mf_config):
    X, B = low_rank
    U, V = mf_fit(X, B, mf_config)
    assert U.shape == (8, 2) and V.shape == (7, 2)
    U2, V2 = mf_fit(X, B, mf_config)
    np.testing.assert_array_equal(U, U2)
    np.testing.assert_array_equal(V, V2)


def test_mf_fit_uses_given_validation_mask(low_rank, mf_config):
    X, B = low_rank
    valid = np.zeros_like(B)
    valid[np.nonzero(B)[0][0], np.nonzero(B)[1][0]] = 1.0
    U, V = mf_fit(X, B, mf_config, valid_mask=valid)
    assert np.isfinite(U @ V.T).all()


def test_mf_fit_single_observation(mf_config):
    X = np.zeros((3, 3))
    B = np.zeros((3, 3))
    X[1, 1] = 2.0
    B[1, 1] = 1.0
    predicted = mf_predict(X, B, mf_config)
    assert np.isfinite(predicted).all()
    assert predicted[1, 1] == pytest.approx(2.0, abs=0.05)


def test_mf_fit_recovers_rank_one_matrix():
    X = np.array([[1.0, 2.0], [2.0, 4.0]])
    B = np.ones((2, 2))
    cfg = MFConfig(rank=1, weight_decays=(1e-4,), learning_rates=(0.02,), max_iterations=20000, tolerance=0)
    U, V = mf_fit(X, B, cfg)
    assert ((U @ V.T - X) ** 2).mean() < 1e-4


def test_mf_fit_ignores_unobserved_values(low_rank, mf_config):
    X, B = low_rank
    np.testing.assert_array_equal(
        mf_predict(X * B, B, mf_config), mf_predict(X + (1 - B) * 50, B, mf_config)
    )


def test_mf_fit_errors(low_rank, mf_config):
    X, B = low_rank
    with pytest.raises(ContractError):
        mf_fit(X, np.zeros_like(B), mf_config)
    with pytest.raises(ContractError):
        mf_fit(X, B[:, :3], mf_config)


def test_mf_fit_all_diverged(low_rank, monkeypatch):
    import metaimpute.baselines as baselines

    X, B = low_rank

    def diverged(X, B, rank, wd, lr, *args, **kwargs):
        return baselines.MFResult(np.full((8, rank), np.nan), np.zeros((7, rank)), np.nan, 1, wd, lr)

    monkeypatch.setattr(baselines, "mf_descent", diverged)
    with pytest.raises(ConvergenceError):
        mf_fit(X, B, MFConfig(rank=2))


def test_mean_predict():
    X = np.array([[1.0, 9.0], [3.0, 0.0]])
    B = np.array([[1.0, 0.0], [1.0, 0.0]])
    np.testing.assert_array_equal(mean_predict(X, B), np.full((2, 2), 2.0))
    with pytest.raises(ContractError):
        mean_predict(X, np.zeros((2, 2)))


def test_prior_product_predict(params, block):
    suite = make_meta_test_suite(block, count=6, n_rows=5, n_cols=4, rng=np.random.default_rng(3))
    assert len(suite) == 6
    for episode in suite:
        np.testing.assert_array_equal(
            prior_product_predict(episode.X, episode.B, params),
            impute(episode.X, episode.B, params, AdaptConfig(inner_steps=0)),
        )
