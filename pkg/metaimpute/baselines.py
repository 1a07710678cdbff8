"""
Reference imputation methods without meta-learning: per-matrix factorization
(MF), the matrix mean (Mean), and predictions from the prior means alone
(prior-product).
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from metaimpute.exceptions import ContractError, ConvergenceError
from metaimpute.imputer import ModelParams, model_forward, predict
from metaimpute.models import AdaptConfig, MFConfig
from metaimpute.ndgrad import Tensor
from metaimpute.utils import STREAM_BASELINE, rng_stream

logger = logging.getLogger(__name__)

#: Step-size halvings allowed within one iteration before a fit gives up.
MAX_HALVINGS = 40


@dataclass
class MFResult:
    U: Tensor
    V: Tensor
    objective: float
    iterations: int
    weight_decay: float
    learning_rate: float

    @property
    def finite(self) -> bool:
        return math.isfinite(self.objective) and bool(np.isfinite(self.U).all() and np.isfinite(self.V).all())


def mf_objective(X: Tensor, B: Tensor, U: Tensor, V: Tensor, weight_decay: float) -> float:
    residual = B * (U @ V.T - X)
    return float((residual**2).sum() + weight_decay * ((U**2).sum() + (V**2).sum()))


def mf_descent(
    X: Tensor,
    B: Tensor,
    rank: int,
    weight_decay: float,
    learning_rate: float,
    max_iterations: int = 500,
    tolerance: float = 1e-8,
    init_scale: float = 0.1,
    rng: Optional[np.random.Generator] = None,
) -> MFResult:
    """
    Gradient descent on ``sum(B * (U V^T - X)^2) + wd (|U|^2 + |V|^2)`` from a
    uniform ``±init_scale`` start. A step that would increase the objective
    is retried with half the step size, so accepted iterations never
    increase it. Stops after ``max_iterations`` or when the relative decrease
    drops below ``tolerance``.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    n, m = X.shape
    U = rng.uniform(-init_scale, init_scale, size=(n, rank))
    V = rng.uniform(-init_scale, init_scale, size=(m, rank))
    objective = mf_objective(X, B, U, V, weight_decay)
    step = learning_rate
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        residual = B * (U @ V.T - X)
        grad_u = 2.0 * (residual @ V + weight_decay * U)
        grad_v = 2.0 * (residual.T @ U + weight_decay * V)
        for _ in range(MAX_HALVINGS):
            U_next = U - step * grad_u
            V_next = V - step * grad_v
            candidate = mf_objective(X, B, U_next, V_next, weight_decay)
            if math.isfinite(candidate) and candidate <= objective:
                break
            step /= 2.0
        else:
            # no descent step left at this resolution
            break
        decrease = objective - candidate
        U, V, objective = U_next, V_next, candidate
        if decrease <= tolerance * max(abs(objective), 1e-300):
            break
    return MFResult(U, V, objective, iterations, weight_decay, learning_rate)


def _holdout_mask(B: Tensor, fraction: float, rng: np.random.Generator) -> Tensor:
    positions = np.flatnonzero(B)
    count = min(int(math.floor(positions.size * fraction + 0.5)), positions.size - 1)
    valid = np.zeros(B.size)
    if count > 0:
        valid[rng.permutation(positions)[:count]] = 1.0
    return valid.reshape(B.shape)


def mf_fit(
    X: Tensor,
    B: Tensor,
    cfg: Optional[MFConfig] = None,
    valid_mask: Optional[Tensor] = None,
) -> Tuple[Tensor, Tensor]:
    """
    Fit per-matrix MF, choosing weight decay and learning rate by grid search.

    Every grid cell is fit on the observed entries outside ``valid_mask`` and
    scored by squared error on ``valid_mask``; the best cell is refit on all
    observed entries. Without a ``valid_mask``, ``cfg.valid_fraction`` of the
    observed entries is held out at random. If no entry can be held out (a
    single observation), cells are scored on the training error instead.

    Raises:
        ContractError: if ``B`` marks no entry.
        ConvergenceError: if every grid cell produced non-finite factors.
    """
    cfg = cfg or MFConfig()
    X = np.asarray(X, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if X.shape != B.shape or X.ndim != 2:
        raise ContractError(f"values {X.shape} and mask {B.shape} must be equal matrices")
    if not B.any():
        raise ContractError("cannot factorize a matrix without observed entries")
    X = X * B
    if valid_mask is None:
        valid_mask = _holdout_mask(B, cfg.valid_fraction, rng_stream(cfg.seed, STREAM_BASELINE))
    valid_mask = np.asarray(valid_mask, dtype=np.float64) * B
    fit_mask = B - valid_mask
    score_mask = valid_mask if valid_mask.any() else fit_mask

    grid = list(itertools.product(cfg.weight_decays, cfg.learning_rates))
    best: Optional[Tuple[float, int]] = None
    failures: List[str] = []
    for index, (wd, lr) in enumerate(grid):
        result = mf_descent(
            X, fit_mask, cfg.rank, wd, lr, cfg.max_iterations, cfg.tolerance, cfg.init_scale,
            rng_stream(cfg.seed, STREAM_BASELINE, index),
        )
        if not result.finite:
            logger.warning("MF with weight decay %g and learning rate %g diverged", wd, lr)
            failures.append(f"wd={wd:g} lr={lr:g}")
            continue
        error = float(((score_mask * (result.U @ result.V.T - X)) ** 2).sum() / score_mask.sum())
        if math.isfinite(error) and (best is None or error < best[0]):
            best = (error, index)
    if best is None:
        raise ConvergenceError(f"every MF configuration diverged: {', '.join(failures)}")

    wd, lr = grid[best[1]]
    logger.debug("MF picked weight decay %g, learning rate %g (validation %.6f)", wd, lr, best[0])
    result = mf_descent(
        X, B, cfg.rank, wd, lr, cfg.max_iterations, cfg.tolerance, cfg.init_scale,
        rng_stream(cfg.seed, STREAM_BASELINE, best[1]),
    )
    if not result.finite:
        raise ConvergenceError(f"MF refit with wd={wd:g} lr={lr:g} diverged")
    return result.U, result.V


def mf_predict(X: Tensor, B: Tensor, cfg: Optional[MFConfig] = None) -> Tensor:
    U, V = mf_fit(X, B, cfg)
    return U @ V.T


def mean_predict(X: Tensor, B: Tensor) -> Tensor:
    """
    Every entry predicted as the mean of the observed entries.

    Raises:
        ContractError: if ``B`` marks no entry.
    """
    X = np.asarray(X, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    count = B.sum()
    if count == 0:
        raise ContractError("cannot average a matrix without observed entries")
    return np.full(X.shape, float((X * B).sum() / count))


def prior_product_predict(X: Tensor, B: Tensor, params: ModelParams) -> Tensor:
    """
    ``U0 V0^T``: the model's prediction without any gradient step.
    """
    return predict(model_forward(X, B, params, AdaptConfig(inner_steps=0), mode="eval"))
