"""
Download public rating datasets.
"""

import logging
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Collection, Dict, Optional, Tuple, Union

from requests import Session
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from metaimpute.data.formats import TripletFormat
from metaimpute.exceptions import ContractError

logger = logging.getLogger(__name__)

DEFAULT_RETRIABLE_STATUS_CODES = (429, 500, 502, 503, 504)
DEFAULT_BACKOFF_FACTOR = 0.5  # retry after 0.5, 1, 2, 4, 8 seconds
DEFAULT_MAX_RETRIES = 5
DEFAULT_TIMEOUT = (10.0, 120.0)
CHUNK_SIZE = 1 << 16


@dataclass(frozen=True)
class DatasetSource:
    url: str
    #: Path of the ratings file inside the archive.
    member: str
    format: TripletFormat


DATASETS: Dict[str, DatasetSource] = {
    "ml-100k": DatasetSource(
        "https://files.grouplens.org/datasets/movielens/ml-100k.zip",
        "ml-100k/u.data",
        "movielens_tab",
    ),
    "ml-1m": DatasetSource(
        "https://files.grouplens.org/datasets/movielens/ml-1m.zip",
        "ml-1m/ratings.dat",
        "movielens_dcolon",
    ),
}


def retry_strategy(
    *,
    status_forcelist: Tuple[int, ...] = DEFAULT_RETRIABLE_STATUS_CODES,
    backoff_factor: Union[int, float] = DEFAULT_BACKOFF_FACTOR,
    total: int = DEFAULT_MAX_RETRIES,
    allowed_methods: Optional[Collection[str]] = ("GET",),
    **kwargs: Any,
) -> Retry:
    """
    Create a `Retry <https://urllib3.readthedocs.io/en/stable/reference/urllib3.util.html#urllib3.util.Retry>`_
    instance for downloads.

    Args:
        status_forcelist: Status codes which should be retried.
        allowed_methods: HTTP methods which can be retried.
        backoff_factor: Sleep ``backoff_factor * (2 ** (retry_count - 1))``
            seconds between attempts after the second try.
        total: Maximum number of retries; ``0`` disables them.
        **kwargs: Accepts any valid parameter to `Retry`_.
    """
    return Retry(
        total=total,
        backoff_factor=backoff_factor,
        status_forcelist=status_forcelist,
        allowed_methods=allowed_methods,
        **kwargs,
    )


class _RetryingSession(Session):
    def __init__(self, retry_strategy: Retry):
        super().__init__()

        adapter = HTTPAdapter(max_retries=retry_strategy)

        self.mount("https://", adapter)
        self.mount("http://", adapter)


def download(
    url: str,
    target: Union[str, Path],
    session: Optional[Session] = None,
    timeout: Tuple[float, float] = DEFAULT_TIMEOUT,
) -> Path:
    """
    Stream ``url`` into ``target``; the file only appears once complete.

    Raises:
        requests.HTTPError: if the server answers with an error status.
    """
    target = Path(target)
    session = session or _RetryingSession(retry_strategy())
    partial = target.with_name(target.name + ".part")
    with session.get(url, stream=True, timeout=timeout) as response:
        response.raise_for_status()
        with partial.open("wb") as fp:
            for chunk in response.iter_content(chunk_size=CHUNK_SIZE):
                fp.write(chunk)
    partial.replace(target)
    logger.info("Downloaded %s to %s", url, target)
    return target


def fetch_dataset(
    name: str,
    directory: Union[str, Path],
    session: Optional[Session] = None,
    force: bool = False,
) -> Tuple[Path, TripletFormat]:
    """
    Download a dataset archive into ``directory`` (unless already there) and
    extract its ratings file next to it.

    Returns:
        Path of the ratings file and the format to read it with.

    Raises:
        ContractError: for an unknown dataset name or an archive without
            the expected ratings file.
    """
    try:
        source = DATASETS[name]
    except KeyError:
        raise ContractError(f"unknown dataset {name!r}; expected one of {sorted(DATASETS)}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ratings = directory / source.member
    if ratings.exists() and not force:
        logger.info("Using existing %s", ratings)
        return ratings, source.format

    archive = directory / source.url.rsplit("/", 1)[-1]
    if force or not archive.exists():
        download(source.url, archive, session=session)
    try:
        with zipfile.ZipFile(archive) as zf:
            zf.extract(source.member, directory)
    except KeyError:
        raise ContractError(f"{archive} does not contain {source.member}")
    except zipfile.BadZipFile as exc:
        raise ContractError(f"{archive} is not a valid zip archive: {exc}") from exc
    return ratings, source.format


__all__ = [
    "DATASETS",
    "download",
    "fetch_dataset",
    "retry_strategy",
]
