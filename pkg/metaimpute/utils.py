import logging
import os
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

#: Environment variable that overrides every ``--seed`` flag.
SEED_ENVVAR = "MMF_SEED"

#: Purposes for which separate random streams are derived from one seed.
STREAM_INIT = 0
STREAM_SAMPLING = 1
STREAM_DROPOUT = 2
STREAM_VALIDATION = 3
STREAM_SUITE = 4
STREAM_BASELINE = 5
STREAM_PARTITION = 6
STREAM_SYNTHETIC = 7


def rng_stream(seed: int, *keys: int) -> np.random.Generator:
    """
    Build an independent random generator for ``(seed, *keys)``.

    Streams with different keys never overlap, so each consumer (parameter
    initialization, episode sampling, dropout, ...) can draw without changing
    what the others see.

    >>> a = rng_stream(7, STREAM_SAMPLING)
    >>> b = rng_stream(7, STREAM_SAMPLING)
    >>> a.random() == b.random()
    True
    """
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


def child_seed(rng: np.random.Generator) -> int:
    """
    Draw a seed for a sub-stream from ``rng``.
    """
    return int(rng.integers(0, 2**63 - 1))


def resolve_seed(seed: Optional[int]) -> int:
    """
    Apply the ``MMF_SEED`` environment override to a seed given on the command line.
    """
    override = os.environ.get(SEED_ENVVAR, "").strip()
    if override:
        logger.info("Using seed %s from %s", override, SEED_ENVVAR)
        return int(override)
    return 0 if seed is None else seed


def format_float(value: float) -> str:
    """
    Format a float with 17 significant digits, enough to parse back the same bits.

    >>> format_float(0.1)
    '0.10000000000000001'
    """
    return format(float(value), ".17g")


def standard_error(values: Sequence[float]) -> float:
    """
    Standard error of the mean (sample standard deviation over ``sqrt(n)``).
    Returns 0 for fewer than two values.
    """
    if len(values) < 2:
        return 0.0
    array = np.asarray(values, dtype=np.float64)
    return float(array.std(ddof=1) / np.sqrt(array.size))

