"""
Reading and writing rating triplets in the supported text formats.
"""

import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Tuple, Union

from typing_extensions import TypeAlias

from metaimpute.exceptions import ContractError, ParseError
from metaimpute.utils import format_float

logger = logging.getLogger(__name__)

EntityId: TypeAlias = Union[int, str]
Triplet: TypeAlias = Tuple[EntityId, EntityId, float]
TripletFormat: TypeAlias = Literal["movielens_tab", "movielens_dcolon", "csv"]

#: Separator and minimum field count of each format.
FORMATS: Dict[str, Tuple[str, int]] = {
    "movielens_tab": ("\t", 4),
    "movielens_dcolon": ("::", 4),
    "csv": (",", 3),
}


def parse_id(token: str) -> EntityId:
    """
    Entity ids are kept as ``int`` when they are integer literals.

    >>> parse_id("42"), parse_id("u42")
    (42, 'u42')
    """
    token = token.strip()
    try:
        return int(token)
    except ValueError:
        return token


def parse_line(line: str, fmt: TripletFormat) -> Triplet:
    """
    Parse a single line. Raises ``ValueError`` (without location) on bad input.

    >>> parse_line("1\\t2\\t5\\t881250949", "movielens_tab")
    (1, 2, 5.0)
    >>> parse_line("1::1193::5::978300760", "movielens_dcolon")
    (1, 1193, 5.0)
    """
    separator, expected = FORMATS[fmt]
    fields = line.split(separator)
    if len(fields) != expected:
        raise ValueError(f"expected {expected} fields separated by {separator!r}, got {len(fields)}")
    user, item = parse_id(fields[0]), parse_id(fields[1])
    if user == "" or item == "":
        raise ValueError("empty user or item id")
    rating = float(fields[2])
    if not math.isfinite(rating):
        raise ValueError(f"rating is not finite: {fields[2]!r}")
    return (user, item, rating)


def load_triplets(
    path: Union[str, Path],
    format: TripletFormat = "movielens_tab",
) -> List[Triplet]:
    """
    Read ``(user, item, rating)`` triplets from a ratings file.

    ``movielens_tab`` is ``user<TAB>item<TAB>rating<TAB>timestamp``,
    ``movielens_dcolon`` is ``user::item::rating::timestamp`` and ``csv`` is
    ``user,item,rating`` with an optional header line. Blank lines are skipped.

    Raises:
        ParseError: on a malformed or non-UTF-8 line (with its line number),
            or if the file holds no ratings.
    """
    if format not in FORMATS:
        raise ContractError(f"unknown triplet format {format!r}; expected one of {sorted(FORMATS)}")
    path = Path(path)
    triplets: List[Triplet] = []
    with path.open("rb") as fp:
        for line_number, raw in enumerate(fp, start=1):
            try:
                line = raw.decode("utf-8").strip()
            except UnicodeDecodeError as exc:
                raise ParseError(
                    f"invalid UTF-8 at byte {exc.start}", path=str(path), line_number=line_number
                ) from exc
            if not line:
                continue
            try:
                triplets.append(parse_line(line, format))
            except ValueError as exc:
                if format == "csv" and line_number == 1 and not triplets:
                    # header
                    continue
                raise ParseError(str(exc), path=str(path), line_number=line_number) from exc
    if not triplets:
        raise ParseError(f"{path}: no ratings found", path=str(path))
    logger.info("Loaded %d ratings from %s", len(triplets), path)
    return triplets


def write_triplets(path: Union[str, Path], triplets: Iterable[Triplet]) -> int:
    """
    Write triplets as ``user,item,rating`` lines (no header) and return how
    many were written. Ratings keep 17 significant digits.
    """
    count = 0
    with Path(path).open("w", encoding="utf-8") as fp:
        for user, item, rating in triplets:
            fp.write(f"{user},{item},{format_float(rating)}\n")
            count += 1
    return count
