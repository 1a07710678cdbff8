"""
Episodic meta-training of the prior generator.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from metaimpute.data.episodes import DatasetSplit, Episode, RatingMatrix, make_meta_test_suite, sample_episode
from metaimpute.exceptions import ContractError, NonFiniteGradientError, TrainingDivergedError
from metaimpute.imputer import ModelParams, episode_loss, model_forward
from metaimpute.models import AdaptConfig, TrainConfig
from metaimpute.ndgrad import Tensor, backward
from metaimpute.training.adam import AdamState, adam_step, check_finite
from metaimpute.training.checkpoint import Checkpoint, EpochRecord, TrainingLog
from metaimpute.utils import (
    STREAM_DROPOUT,
    STREAM_INIT,
    STREAM_SAMPLING,
    STREAM_VALIDATION,
    child_seed,
    rng_stream,
)

logger = logging.getLogger(__name__)

EpochCallback = Callable[[EpochRecord], None]


def episode_gradients(
    params: ModelParams,
    episode: Episode,
    cfg: TrainConfig,
    seed: int,
) -> Tuple[float, Dict[str, Tensor]]:
    """
    Train-mode loss of one episode and its gradient for every parameter.
    Clears any gradient already held by ``params``.
    """
    params.zero_grad()
    rng = np.random.default_rng(seed)
    fp = model_forward(
        episode.X, episode.B, params, cfg.adapt_settings(), mode="train", rng=rng, dropout=cfg.dropout
    )
    loss = episode_loss(episode.Xp, episode.Bp, fp)
    backward(loss)
    return loss.item(), params.gradients()


def batch_gradients(
    params: ModelParams,
    episodes: Sequence[Episode],
    cfg: TrainConfig,
    seeds: Sequence[int],
    pool: Optional[ThreadPoolExecutor] = None,
) -> Tuple[float, Dict[str, Tensor]]:
    """
    Mean loss over ``episodes`` and the gradient of that mean. Each episode
    gets its own graph; gradients are summed in episode order, so the result
    does not depend on how many threads computed them.
    """
    if pool is None:
        results = [episode_gradients(params, ep, cfg, seed) for ep, seed in zip(episodes, seeds)]
    else:
        results = list(
            pool.map(
                lambda job: episode_gradients(params.copy(), job[0], cfg, job[1]),
                zip(episodes, seeds),
            )
        )
    count = len(results)
    total: Dict[str, Tensor] = {}
    for _, grads in results:
        for name, grad in grads.items():
            total[name] = total[name] + grad if name in total else grad.copy()
    mean_grads = {name: grad / count for name, grad in total.items()}
    mean_loss = sum(loss for loss, _ in results) / count
    params.zero_grad()
    return mean_loss, mean_grads


def validation_loss(params: ModelParams, suite: Sequence[Episode], adapt: AdaptConfig) -> float:
    """
    Mean eval-mode test loss over a fixed suite.
    """
    losses = [
        episode_loss(ep.Xp, ep.Bp, model_forward(ep.X, ep.B, params, adapt, mode="eval")).item()
        for ep in suite
    ]
    return float(sum(losses) / len(losses))


def _training_limits(blocks: Sequence[RatingMatrix], cfg: TrainConfig) -> Tuple[int, int]:
    n_rows = min([cfg.n_rows] + [b.n_rows for b in blocks])
    n_cols = min([cfg.n_cols] + [b.n_cols for b in blocks])
    if (n_rows, n_cols) != (cfg.n_rows, cfg.n_cols):
        logger.warning("Training blocks are small; episodes are at most %dx%d", n_rows, n_cols)
    return n_rows, n_cols


def _episode_size(cfg: TrainConfig, rng: np.random.Generator, limits: Tuple[int, int]) -> Tuple[int, int]:
    n_rows, n_cols = limits
    if not cfg.vary_size:
        return n_rows, n_cols
    return (
        int(rng.integers(min(cfg.min_size, n_rows), n_rows + 1)),
        int(rng.integers(min(cfg.min_size, n_cols), n_cols + 1)),
    )


def _validation_suite(blocks: Sequence[RatingMatrix], cfg: TrainConfig) -> List[Episode]:
    n_rows = min([cfg.n_rows] + [b.n_rows for b in blocks])
    n_cols = min([cfg.n_cols] + [b.n_cols for b in blocks])
    if (n_rows, n_cols) != (cfg.n_rows, cfg.n_cols):
        logger.warning("Validation blocks are small; using %dx%d validation episodes", n_rows, n_cols)
    return make_meta_test_suite(
        blocks,
        count=cfg.valid_episodes,
        n_rows=n_rows,
        n_cols=n_cols,
        holdout=1.0 - cfg.train_ratio,
        rng=rng_stream(cfg.seed, STREAM_VALIDATION),
    )


def meta_train(
    split: Union[DatasetSplit, Sequence[DatasetSplit]],
    cfg: TrainConfig,
    log: Optional[TrainingLog] = None,
    on_epoch: Optional[EpochCallback] = None,
) -> Checkpoint:
    """
    Meta-train a freshly initialized model and return the parameters with
    the best meta-validation loss.

    Every batch samples ``cfg.batch_size`` episodes, each from a meta-training
    block chosen uniformly across all given splits, and takes one Adam step on
    the mean episode loss. After every epoch (``cfg.batches_per_epoch``
    batches) the model is scored on a fixed meta-validation suite; training
    stops early after ``cfg.patience`` epochs without improvement.
    Episode sizes are capped by the smallest meta-training block.

    Args:
        split: One split, or several to meta-train on a mixture of datasets.
            The checkpoint records the normalization of the first.
        cfg: Training configuration.
        log: Receives one record per epoch (epoch 0 is the initialization).
        on_epoch: Called with each record as soon as it is known.

    Raises:
        TrainingDivergedError: if the validation loss or a gradient stops
            being finite; ``.checkpoint`` holds the last finite parameters.
    """
    splits = [split] if isinstance(split, DatasetSplit) else list(split)
    if not splits:
        raise ContractError("meta-training needs at least one split")
    train_blocks = [block for s in splits for block in s.train_blocks]
    valid_blocks = [block for s in splits for block in s.valid_blocks]
    log = log if log is not None else TrainingLog()

    params = ModelParams.initialize(cfg.model_settings(), rng_stream(cfg.seed, STREAM_INIT))
    named = params.named_parameters()
    state = AdamState.zeros(named)
    adapt = cfg.adapt_settings()
    sampling_rng = rng_stream(cfg.seed, STREAM_SAMPLING)
    dropout_rng = rng_stream(cfg.seed, STREAM_DROPOUT)
    suite = _validation_suite(valid_blocks, cfg)
    limits = _training_limits(train_blocks, cfg)
    logger.info(
        "Meta-training %s on %d block(s) of %s",
        params,
        len(train_blocks),
        ", ".join(s.name or "?" for s in splits),
    )

    def checkpoint(parameters: Dict[str, Tensor], best: float, epochs: int, seconds: float) -> Checkpoint:
        return Checkpoint(
            config=cfg,
            parameters=parameters,
            norm_mean=splits[0].norm_mean,
            norm_std=splits[0].norm_std,
            best_valid_loss=best,
            epochs_run=epochs,
            train_seconds=seconds,
        )

    def record(epoch: int, train_loss: float, valid_loss: float) -> None:
        entry = EpochRecord(epoch, train_loss, valid_loss)
        log.append(entry)
        if on_epoch is not None:
            on_epoch(entry)

    start = time.perf_counter()
    best_loss = validation_loss(params, suite, adapt)
    if not math.isfinite(best_loss):
        raise TrainingDivergedError("initial validation loss is not finite")
    best_state = params.state_dict()
    last_good = best_state
    record(0, math.nan, best_loss)
    logger.info("Epoch 0: valid %.6f", best_loss)

    stale = 0
    epochs_run = 0
    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            batch_losses: List[float] = []
            for batch in range(cfg.batches_per_epoch):
                n_rows, n_cols = _episode_size(cfg, sampling_rng, limits)
                episodes = [
                    sample_episode(
                        train_blocks[int(sampling_rng.integers(len(train_blocks)))],
                        n_rows,
                        n_cols,
                        cfg.train_ratio,
                        sampling_rng,
                    )
                    for _ in range(cfg.batch_size)
                ]
                seeds = [child_seed(dropout_rng) for _ in episodes]
                loss, grads = batch_gradients(params, episodes, cfg, seeds, pool)
                try:
                    check_finite(grads)
                except NonFiniteGradientError as exc:
                    elapsed = time.perf_counter() - start
                    raise TrainingDivergedError(
                        f"epoch {epoch} batch {batch}: {exc}",
                        checkpoint=checkpoint(params.state_dict(), best_loss, epoch - 1, elapsed),
                    ) from exc
                adam_step(named, grads, state, cfg.outer_lr)
                batch_losses.append(loss)
                logger.debug("Epoch %d batch %d: loss %.6f", epoch, batch, loss)

            epochs_run = epoch
            valid = validation_loss(params, suite, adapt)
            elapsed = time.perf_counter() - start
            train_loss = float(np.mean(batch_losses))
            record(epoch, train_loss, valid)
            if not math.isfinite(valid):
                raise TrainingDivergedError(
                    f"validation loss became {valid} at epoch {epoch}",
                    checkpoint=checkpoint(last_good, best_loss, epoch - 1, elapsed),
                )
            last_good = params.state_dict()
            if valid < best_loss:
                best_loss, best_state, stale = valid, last_good, 0
            else:
                stale += 1
            logger.info(
                "Epoch %d: train %.6f valid %.6f (best %.6f, %.1fs)",
                epoch,
                train_loss,
                valid,
                best_loss,
                elapsed,
            )
            if stale >= cfg.patience:
                logger.warning("No improvement for %d epochs; stopping at epoch %d", stale, epoch)
                break
    finally:
        if pool is not None:
            pool.shutdown()

    return checkpoint(best_state, best_loss, epochs_run, time.perf_counter() - start)
