__version__ = "1.0.0"

from metaimpute.data.episodes import DatasetSplit, Episode, RatingMatrix
from metaimpute.imputer import FactorPair, ModelParams, impute, model_forward, predict
from metaimpute.models import AdaptConfig, MFConfig, ModelConfig, TrainConfig
from metaimpute.training.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from metaimpute.training.metatrain import meta_train

__all__ = [
    "AdaptConfig",
    "Checkpoint",
    "DatasetSplit",
    "Episode",
    "FactorPair",
    "MFConfig",
    "ModelConfig",
    "ModelParams",
    "RatingMatrix",
    "TrainConfig",
    "impute",
    "load_checkpoint",
    "meta_train",
    "model_forward",
    "predict",
    "save_checkpoint",
]
