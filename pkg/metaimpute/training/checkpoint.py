"""
Checkpoint files.

Layout (all integers little-endian ``u32`` unless noted):

.. code-block:: text

    b"MMF1"
    version
    length, config text (utf-8 key=value lines)
    record count
    per record: name length, name (utf-8), rank, rank x u64 dims,
                float64 little-endian payload in row-major order
    CRC32 of everything above
"""

import logging
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pydantic
from typing_extensions import Self

from metaimpute.exceptions import (
    CheckpointChecksumError,
    CheckpointFormatError,
    CheckpointVersionError,
    ParseError,
)
from metaimpute.imputer import ModelParams
from metaimpute.models import TrainConfig
from metaimpute.ndgrad import Tensor
from metaimpute.utils import format_float

logger = logging.getLogger(__name__)

MAGIC = b"MMF1"
FORMAT_VERSION = 1

#: Keys of the config block that are not part of :class:`TrainConfig`.
_EXTRA_KEYS = ("best-valid-loss", "epochs-run", "norm-mean", "norm-std")


@dataclass
class Checkpoint:
    """
    Trained parameters plus what is needed to use and audit them.
    """

    config: TrainConfig
    parameters: Dict[str, Tensor]
    norm_mean: float = 0.0
    norm_std: float = 1.0
    best_valid_loss: float = math.nan
    epochs_run: int = 0
    #: Wall-clock training time; reported, never written to the file.
    train_seconds: float = field(default=0.0, compare=False)
    version: int = FORMAT_VERSION

    @classmethod
    def from_params(cls, params: ModelParams, config: TrainConfig, **kwargs: object) -> Self:
        return cls(config=config, parameters=params.state_dict(), **kwargs)  # type: ignore[arg-type]

    def model_params(self) -> ModelParams:
        return ModelParams.from_state_dict(self.config.model_settings(), self.parameters)

    def config_text(self) -> str:
        extra = {
            "best-valid-loss": format_float(self.best_valid_loss),
            "epochs-run": str(self.epochs_run),
            "norm-mean": format_float(self.norm_mean),
            "norm-std": format_float(self.norm_std),
        }
        lines = self.config.to_text().splitlines()
        lines.extend(f"{key}={value}" for key, value in extra.items())
        return "\n".join(sorted(lines)) + "\n"


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int) -> bytes:
        if size < 0 or self.offset + size > len(self.data):
            raise CheckpointFormatError(
                f"checkpoint is truncated (needed {size} bytes at offset {self.offset})"
            )
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def u32(self) -> int:
        return int(struct.unpack("<I", self.take(4))[0])

    def u64s(self, count: int) -> Tuple[int, ...]:
        return tuple(int(x) for x in struct.unpack(f"<{count}Q", self.take(8 * count)))


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    config = ckpt.config_text().encode("utf-8")
    parts: List[bytes] = [
        MAGIC,
        struct.pack("<I", ckpt.version),
        struct.pack("<I", len(config)),
        config,
        struct.pack("<I", len(ckpt.parameters)),
    ]
    for name, tensor in ckpt.parameters.items():
        array = np.asarray(tensor, dtype="<f8")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", array.ndim))
        parts.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        parts.append(array.tobytes(order="C"))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def _parse_config(text: str) -> Tuple[TrainConfig, Dict[str, str]]:
    config_lines: List[str] = []
    extra: Dict[str, str] = {}
    for line in text.splitlines():
        key, _, value = line.partition("=")
        if key.strip() in _EXTRA_KEYS:
            extra[key.strip()] = value.strip()
        else:
            config_lines.append(line)
    try:
        config = TrainConfig.from_text("\n".join(config_lines))
    except (ParseError, pydantic.ValidationError) as exc:
        raise CheckpointFormatError(f"invalid config block: {exc}") from exc
    return config, extra


def decode_checkpoint(data: bytes, expected_version: int = FORMAT_VERSION) -> Checkpoint:
    """
    Raises:
        CheckpointFormatError: bad magic, truncated or malformed content.
        CheckpointVersionError: a version this code cannot read.
        CheckpointChecksumError: content does not match its CRC32.
    """
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError("not a checkpoint file (bad magic)")
    reader = _Reader(data)
    reader.take(len(MAGIC))
    version = reader.u32()
    if version != expected_version:
        raise CheckpointVersionError(
            f"checkpoint format version {version} is not supported (expected {expected_version})"
        )
    try:
        config_text = reader.take(reader.u32()).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CheckpointFormatError(f"config block is not utf-8: {exc}") from exc
    parameters: Dict[str, Tensor] = {}
    for _ in range(reader.u32()):
        try:
            name = reader.take(reader.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointFormatError(f"parameter name is not utf-8: {exc}") from exc
        dims = reader.u64s(reader.u32())
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        payload = reader.take(8 * size)
        parameters[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)

    body_end = reader.offset
    (stored,) = struct.unpack("<I", reader.take(4))
    if reader.offset != len(data):
        raise CheckpointFormatError(f"{len(data) - reader.offset} unexpected bytes after the checksum")
    if zlib.crc32(data[:body_end]) != stored:
        raise CheckpointChecksumError("checkpoint checksum does not match its content")

    config, extra = _parse_config(config_text)
    try:
        return Checkpoint(
            config=config,
            parameters=parameters,
            norm_mean=float(extra.get("norm-mean", 0.0)),
            norm_std=float(extra.get("norm-std", 1.0)),
            best_valid_loss=float(extra.get("best-valid-loss", math.nan)),
            epochs_run=int(extra.get("epochs-run", 0)),
            version=version,
        )
    except ValueError as exc:
        raise CheckpointFormatError(f"invalid config block: {exc}") from exc


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    """
    Write ``ckpt`` to ``path``; the file is replaced only once fully written.
    """
    path = Path(path)
    partial = path.with_name(path.name + ".part")
    partial.write_bytes(encode_checkpoint(ckpt))
    partial.replace(path)
    logger.info("Saved checkpoint with %d tensors to %s", len(ckpt.parameters), path)
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_loss: float


@dataclass
class TrainingLog:
    """
    Epoch-by-epoch losses, written as tab-separated text.
    """

    records: List[EpochRecord] = field(default_factory=list)

    HEADER = "epoch\ttrain_loss\tvalid_loss"

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    @property
    def best(self) -> Optional[EpochRecord]:
        finite = [r for r in self.records if math.isfinite(r.valid_loss)]
        return min(finite, key=lambda r: r.valid_loss) if finite else None

    def to_text(self) -> str:
        lines = [self.HEADER]
        for r in self.records:
            lines.append(f"{r.epoch}\t{format_float(r.train_loss)}\t{format_float(r.valid_loss)}")
        return "\n".join(lines) + "\n"

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")
