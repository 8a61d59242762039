"""
ptcmil.training
~~~~~~~~~~~~~~~

The optimizer, the training loop, checkpoints, few-shot adaptation and the
mean-pool baseline.
"""

from .adapt import AdaptationPlan, AdaptationResult, compare_reports, evaluate_checkpoint, few_shot_adapt, select_shots
from .checkpoint import CHECKPOINT_MAGIC, CHECKPOINT_VERSION, Checkpoint
from .events import TrainingEvents
from .loop import (
    HISTORY_COLUMNS,
    EpochRecord,
    EvalReport,
    FitResult,
    LossBreakdown,
    TrainConfig,
    evaluate,
    fit,
    train_step,
    training_objective,
    write_history_csv,
)
from .optim import AdamW, CosineSchedule, adam_step, cosine_lr
from .probe import MeanPoolProbe, fit_mean_pool_probe

__all__ = (
    "AdamW",
    "CosineSchedule",
    "adam_step",
    "cosine_lr",
    "TrainingEvents",
    "TrainConfig",
    "LossBreakdown",
    "EpochRecord",
    "EvalReport",
    "FitResult",
    "HISTORY_COLUMNS",
    "training_objective",
    "train_step",
    "evaluate",
    "fit",
    "write_history_csv",
    "Checkpoint",
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
    "AdaptationPlan",
    "AdaptationResult",
    "select_shots",
    "few_shot_adapt",
    "compare_reports",
    "evaluate_checkpoint",
    "MeanPoolProbe",
    "fit_mean_pool_probe",
)
