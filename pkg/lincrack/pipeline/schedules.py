"""
Learning-Rate Schedules

Step decay for the classifier (0.005, ×0.1 every ten epochs) and a two-phase
schedule for the segmenter (0.001 for the first half, then 0.0001), both over
100 epochs by default.
"""

from lincrack.core.exceptions import ConfigurationError
from lincrack.utils.validation import validate_positive_float, validate_positive_int

CLASSIFIER_BASE_LR = 0.005
CLASSIFIER_DECAY_STEP = 10
CLASSIFIER_DECAY_FACTOR = 0.1
SEGMENTER_EARLY_LR = 0.001
SEGMENTER_LATE_LR = 0.0001
SEGMENTER_SWITCH_EPOCH = 50
DEFAULT_EPOCHS = 100


def _check_epoch(epoch: int, total_epochs: int) -> None:
    validate_positive_int(total_epochs, 'total_epochs')
    if isinstance(epoch, bool) or not isinstance(epoch, int) or not 0 <= epoch < total_epochs:
        raise ConfigurationError(f"epoch must be in 0..{total_epochs - 1}, got {epoch!r}")


def lr_schedule_classifier(
    epoch: int,
    total_epochs: int = DEFAULT_EPOCHS,
    base_lr: float = CLASSIFIER_BASE_LR,
    decay_step: int = CLASSIFIER_DECAY_STEP,
    decay_factor: float = CLASSIFIER_DECAY_FACTOR,
) -> float:
    """base_lr · decay_factor^floor(epoch / decay_step)."""
    _check_epoch(epoch, total_epochs)
    validate_positive_float(base_lr, 'base_lr')
    validate_positive_int(decay_step, 'decay_step')
    validate_positive_float(decay_factor, 'decay_factor')
    return base_lr * decay_factor ** (epoch // decay_step)


def lr_schedule_segmenter(
    epoch: int,
    total_epochs: int = DEFAULT_EPOCHS,
    early_lr: float = SEGMENTER_EARLY_LR,
    late_lr: float = SEGMENTER_LATE_LR,
    switch_epoch: int = SEGMENTER_SWITCH_EPOCH,
) -> float:
    """early_lr before ``switch_epoch``, late_lr from it on."""
    _check_epoch(epoch, total_epochs)
    validate_positive_float(early_lr, 'early_lr')
    validate_positive_float(late_lr, 'late_lr')
    return early_lr if epoch < switch_epoch else late_lr
