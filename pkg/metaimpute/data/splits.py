"""
Prepared split directories.

A directory holds ``split.txt`` (the :class:`~metaimpute.models.SplitInfo`
as ``key=value`` lines), one csv file of normalized ratings per block
(``train-000.csv``, ``valid-000.csv``, ``test-000.csv``, ...) and usually the
evaluation ``manifest.txt``.
"""

import logging
from pathlib import Path
from typing import List, Tuple, Union

from metaimpute.data.episodes import ROLES, DatasetSplit, RatingMatrix
from metaimpute.data.formats import load_triplets, write_triplets
from metaimpute.exceptions import ContractError
from metaimpute.models import SplitInfo

logger = logging.getLogger(__name__)

INFO_FILE = "split.txt"
MANIFEST_FILE = "manifest.txt"


def block_path(directory: Union[str, Path], role: str, index: int) -> Path:
    return Path(directory) / f"{role}-{index:03d}.csv"


def save_split(
    directory: Union[str, Path],
    split: DatasetSplit,
    info: SplitInfo,
) -> List[Path]:
    """
    Write every block and ``split.txt``. Returns the paths written.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    for role in ROLES:
        for index, block in enumerate(split.blocks(role)):
            path = block_path(directory, role, index)
            count = write_triplets(path, block.triplets())
            logger.debug("Wrote %d ratings to %s", count, path)
            written.append(path)
    info_path = directory / INFO_FILE
    info_path.write_text(info.to_text(), encoding="utf-8")
    written.append(info_path)
    return written


def load_split(directory: Union[str, Path]) -> Tuple[DatasetSplit, SplitInfo]:
    """
    Read a directory written by :func:`save_split`.

    Raises:
        ContractError: if ``split.txt`` is missing.
    """
    directory = Path(directory)
    info_path = directory / INFO_FILE
    if not info_path.exists():
        raise ContractError(f"{directory} is not a prepared split (no {INFO_FILE})")
    info = SplitInfo.from_text(info_path.read_text(encoding="utf-8"), path=str(info_path))
    blocks = {
        role: [
            RatingMatrix.from_triplets(load_triplets(block_path(directory, role, index), "csv"))
            for index in range(getattr(info, f"{role}_blocks"))
        ]
        for role in ROLES
    }
    split = DatasetSplit(
        blocks["train"],
        blocks["valid"],
        blocks["test"],
        norm_mean=info.norm_mean,
        norm_std=info.norm_std,
        name=info.name or directory.name,
    )
    logger.info("Loaded split %s from %s", split, directory)
    return split, info
