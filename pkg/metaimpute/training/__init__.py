from metaimpute.training.adam import AdamState, adam_step
from metaimpute.training.checkpoint import (
    Checkpoint,
    EpochRecord,
    TrainingLog,
    load_checkpoint,
    save_checkpoint,
)
from metaimpute.training.evaluate import (
    Report,
    ReportRow,
    evaluate,
    evaluate_methods,
    evaluate_predictor,
    summary_table,
)
from metaimpute.training.metatrain import meta_train

__all__ = [
    "AdamState",
    "Checkpoint",
    "EpochRecord",
    "Report",
    "ReportRow",
    "TrainingLog",
    "adam_step",
    "evaluate",
    "evaluate_methods",
    "evaluate_predictor",
    "load_checkpoint",
    "meta_train",
    "save_checkpoint",
    "summary_table",
]
