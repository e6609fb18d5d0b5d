"""
lincrack pipeline

Configuration, training, the two-stage inspection run and the explain/eval
commands.
"""

from .config import (
    PipelineConfig,
    StageConfig,
    ScoreCamSettings,
    TrainingConfig,
    DEFAULT_SCORECAM_TAPS,
)
from .schedules import lr_schedule_classifier, lr_schedule_segmenter
from .training import (
    EpochRecord,
    TrainingResult,
    fit,
    micro_iou,
    train_classifier,
    train_segmenter,
    write_loss_curve,
)
from .runner import RecordResult, RunReport, run_pipeline
from .commands import (
    explain_command,
    eval_command,
    eval_summary,
    explanation_paths,
    write_explanations,
)

__all__ = [
    'PipelineConfig',
    'StageConfig',
    'ScoreCamSettings',
    'TrainingConfig',
    'DEFAULT_SCORECAM_TAPS',
    'lr_schedule_classifier',
    'lr_schedule_segmenter',
    'EpochRecord',
    'TrainingResult',
    'fit',
    'micro_iou',
    'train_classifier',
    'train_segmenter',
    'write_loss_curve',
    'RecordResult',
    'RunReport',
    'run_pipeline',
    'explain_command',
    'eval_command',
    'eval_summary',
    'explanation_paths',
    'write_explanations',
]
