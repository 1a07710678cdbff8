"""
Text manifest of a fixed episode suite, so evaluation sets can be shared and
reloaded bit-exactly.

.. code-block:: text

    # metaimpute episode manifest
    norm-mean=3.5298...
    norm-std=1.1256...
    episodes=10
    episode 0 30 30
    0	4	-0.2915...	train
    3	17	1.4853...	test
    ...

Entry lines are ``row<TAB>col<TAB>value<TAB>train|test`` with values in
normalized units and 17 significant digits.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from metaimpute.data.episodes import Episode
from metaimpute.exceptions import ParseError
from metaimpute.utils import format_float

logger = logging.getLogger(__name__)

MANIFEST_HEADER = "# metaimpute episode manifest"
TAGS = ("train", "test")


@dataclass
class Manifest:
    episodes: List[Episode] = field(default_factory=list)
    norm_mean: float = 0.0
    norm_std: float = 1.0


def write_manifest(
    path: Union[str, Path],
    episodes: Sequence[Episode],
    norm_mean: float = 0.0,
    norm_std: float = 1.0,
) -> None:
    lines = [
        MANIFEST_HEADER,
        f"norm-mean={format_float(norm_mean)}",
        f"norm-std={format_float(norm_std)}",
        f"episodes={len(episodes)}",
    ]
    for index, episode in enumerate(episodes):
        n, m = episode.shape
        lines.append(f"episode {index} {n} {m}")
        for tag, values, mask in (("train", episode.X, episode.B), ("test", episode.Xp, episode.Bp)):
            for row, col in zip(*np.nonzero(mask)):
                lines.append(f"{row}\t{col}\t{format_float(values[row, col])}\t{tag}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("Wrote %d episodes to %s", len(episodes), path)


class _Builder:
    def __init__(self, shape: tuple):
        self.shape = shape
        self.arrays: Dict[str, List[np.ndarray]] = {
            tag: [np.zeros(shape), np.zeros(shape)] for tag in TAGS
        }

    def add(self, row: int, col: int, value: float, tag: str) -> None:
        values, mask = self.arrays[tag]
        if mask[row, col] or self.arrays["train" if tag == "test" else "test"][1][row, col]:
            raise ValueError(f"entry ({row}, {col}) listed twice")
        values[row, col] = value
        mask[row, col] = 1.0

    def build(self) -> Episode:
        (X, B), (Xp, Bp) = self.arrays["train"], self.arrays["test"]
        return Episode(X, B, Xp, Bp)


def read_manifest(path: Union[str, Path]) -> Manifest:
    """
    Raises:
        ParseError: on any malformed line, with its line number.
    """
    path = Path(path)
    manifest = Manifest()
    expected: Optional[int] = None
    current: Optional[_Builder] = None
    seen_header = False

    def fail(message: str, line_number: int) -> ParseError:
        return ParseError(message, path=str(path), line_number=line_number)

    with path.open(encoding="utf-8") as fp:
        for line_number, raw in enumerate(fp, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                seen_header = seen_header or line.strip() == MANIFEST_HEADER
                continue
            if not seen_header:
                raise fail("missing manifest header", line_number)
            try:
                if line.startswith("episode "):
                    _, index, n, m = line.split()
                    if int(index) != len(manifest.episodes) + (current is not None):
                        raise ValueError(f"episode {index} out of order")
                    if current is not None:
                        manifest.episodes.append(current.build())
                    current = _Builder((int(n), int(m)))
                elif "=" in line and current is None:
                    key, value = line.split("=", 1)
                    if key == "norm-mean":
                        manifest.norm_mean = float(value)
                    elif key == "norm-std":
                        manifest.norm_std = float(value)
                    elif key == "episodes":
                        expected = int(value)
                    else:
                        raise ValueError(f"unknown key {key!r}")
                else:
                    if current is None:
                        raise ValueError("entry before the first episode line")
                    row, col, value, tag = line.split("\t")
                    if tag not in TAGS:
                        raise ValueError(f"unknown tag {tag!r}")
                    current.add(int(row), int(col), float(value), tag)
            except (ValueError, IndexError) as exc:
                raise fail(str(exc), line_number) from exc

    if current is not None:
        manifest.episodes.append(current.build())
    if expected is not None and expected != len(manifest.episodes):
        raise ParseError(f"{path}: expected {expected} episodes, found {len(manifest.episodes)}")
    if not manifest.episodes:
        raise ParseError(f"{path}: manifest holds no episodes")
    return manifest
