"""
Configuration models shared by the library and the command line.
"""

from metaimpute.models.config import (
    AdaptConfig,
    MFConfig,
    ModelConfig,
    SplitInfo,
    TrainConfig,
)

__all__ = [
    "AdaptConfig",
    "MFConfig",
    "ModelConfig",
    "SplitInfo",
    "TrainConfig",
]
