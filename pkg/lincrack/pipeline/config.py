"""
Pipeline Configuration

Nested dataclasses behind the YAML pipeline config: the two model stages,
Score-CAM emission, training settings and run-wide thresholds. Everything
round-trips through ``to_dict``/``from_dict`` and can be overridden with
``--set dotted.key=value``.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

from lincrack.constants import CLASSIFIER_INPUT_SIZE, CRACK, DEFAULT_SEED, NUM_CLASSES, SEGMENTER_INPUT_SIZE
from lincrack.core.exceptions import ConfigurationError, MissingWeightsError
from lincrack.core.models import (
    CLASSIFIER_PRESETS,
    SEGMENTER_PRESETS,
    DenseNetConfig,
    ModelGraph,
    SegmenterConfig,
    build_model,
    classifier_preset,
    load_model_config,
    segmenter_preset,
)
from lincrack.core.scorecam import REDUCTIONS
from lincrack.data.weights import load_weights
from lincrack.pipeline.schedules import lr_schedule_classifier, lr_schedule_segmenter
from lincrack.utils.config import ConfigManager
from lincrack.utils.logger import get_logger
from lincrack.utils.validation import (
    validate_choice,
    validate_non_negative_int,
    validate_positive_float,
    validate_positive_int,
    validate_probability,
    validate_size,
)

logger = get_logger(__name__)

SCHEDULES = ('step', 'two_phase')
DEFAULT_SCORECAM_TAPS = (
    'layer1', 'layer2', 'layer3', 'layer4', 'aspp', 'low_level', 'high_level', 'decoder', 'decoder_output',
)


def _from_known(cls, data: Optional[Dict[str, Any]], section: str):
    data = dict(data or {})
    unknown = sorted(set(data) - set(cls.__dataclass_fields__))
    if unknown:
        raise ConfigurationError(f"unknown keys in {section}: {unknown}")
    return cls(**data)


@dataclass
class StageConfig:
    """One model stage: preset, structure overrides, weights and input size.

    A structure document (``<weights>.yaml``) next to the weights takes
    precedence over the preset when both are present.
    """
    architecture: str
    preset: str
    weights: Optional[str] = None
    input_size: Tuple[int, int] = CLASSIFIER_INPUT_SIZE
    overrides: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        validate_choice(self.architecture, 'architecture', ('densenet', 'deeplab'))
        presets = CLASSIFIER_PRESETS if self.architecture == 'densenet' else SEGMENTER_PRESETS
        validate_choice(self.preset, f'{self.architecture} preset', tuple(presets))
        self.input_size = validate_size(self.input_size, 'input_size')
        if not isinstance(self.overrides, dict):
            raise ConfigurationError(f"overrides must be a mapping, got {self.overrides!r}")
        self.weights = str(self.weights) if self.weights else None

    @property
    def structure_path(self) -> Optional[Path]:
        return Path(self.weights).with_suffix('.yaml') if self.weights else None

    def model_config(self) -> Union[DenseNetConfig, SegmenterConfig]:
        if self.structure_path is not None and self.structure_path.exists():
            return load_model_config(self.structure_path)
        overrides = {**self.overrides, 'input_size': self.input_size}
        if self.architecture == 'densenet':
            return classifier_preset(self.preset, **overrides)
        return segmenter_preset(self.preset, **overrides)

    def build(self, require_weights: bool = True) -> ModelGraph:
        """
        Build the model and load its weights.

        Raises:
            MissingWeightsError: If weights are required but absent
            ShapeMismatchError: If the weights do not fit the structure
        """
        if self.weights is None or not Path(self.weights).exists():
            if require_weights:
                raise MissingWeightsError(f"{self.architecture} weights not found: {self.weights}")
            return build_model(self.model_config())
        model = build_model(self.model_config())
        load_weights(self.weights, model)
        return model

    def to_dict(self) -> Dict[str, Any]:
        return {
            'architecture': self.architecture,
            'preset': self.preset,
            'weights': self.weights,
            'input_size': list(self.input_size),
            'overrides': dict(self.overrides),
        }


@dataclass
class ScoreCamSettings:
    """Heatmap emission during ``run`` and the defaults of ``explain``."""
    enabled: bool = False
    taps: Tuple[str, ...] = DEFAULT_SCORECAM_TAPS
    class_index: int = CRACK
    reduction: str = 'mean'
    batch_size: int = 16
    alpha: float = 0.5

    def __post_init__(self):
        if not isinstance(self.enabled, bool):
            raise ConfigurationError(f"scorecam.enabled must be a boolean, got {self.enabled!r}")
        if isinstance(self.taps, str) or not all(isinstance(t, str) for t in self.taps):
            raise ConfigurationError(f"scorecam.taps must be a list of tap names, got {self.taps!r}")
        self.taps = tuple(self.taps)
        validate_non_negative_int(self.class_index, 'scorecam.class_index')
        if self.class_index >= NUM_CLASSES:
            raise ConfigurationError(f"scorecam.class_index must be below {NUM_CLASSES}, got {self.class_index}")
        validate_choice(self.reduction, 'scorecam.reduction', tuple(r for r in REDUCTIONS if r != 'region'))
        validate_positive_int(self.batch_size, 'scorecam.batch_size')
        validate_probability(self.alpha, 'scorecam.alpha')

    def to_dict(self) -> Dict[str, Any]:
        return {
            'enabled': self.enabled,
            'taps': list(self.taps),
            'class_index': self.class_index,
            'reduction': self.reduction,
            'batch_size': self.batch_size,
            'alpha': self.alpha,
        }


@dataclass
class TrainingConfig:
    """Mini-batch SGD settings for one model.

    ``schedule`` selects the step decay (classifier) or the two-phase
    schedule (segmenter). ``target_train_metric`` stops training early once
    the training-set metric (accuracy or micro IoU) reaches it.
    """
    epochs: int = 100
    batch_size: int = 4
    schedule: str = 'step'
    base_lr: float = 0.005
    decay_step: int = 10
    decay_factor: float = 0.1
    switch_epoch: int = 50
    late_lr: float = 0.0001
    momentum: float = 0.9
    weight_decay: float = 0.0
    seed: int = DEFAULT_SEED
    target_train_metric: Optional[float] = None

    def __post_init__(self):
        validate_positive_int(self.epochs, 'epochs')
        validate_positive_int(self.batch_size, 'batch_size')
        validate_choice(self.schedule, 'schedule', SCHEDULES)
        validate_positive_float(self.base_lr, 'base_lr')
        validate_positive_int(self.decay_step, 'decay_step')
        validate_positive_float(self.decay_factor, 'decay_factor')
        validate_non_negative_int(self.switch_epoch, 'switch_epoch')
        validate_positive_float(self.late_lr, 'late_lr')
        if isinstance(self.momentum, bool) or not isinstance(self.momentum, (int, float)) \
                or not 0 <= self.momentum < 1:
            raise ConfigurationError(f"momentum must be in [0, 1), got {self.momentum!r}")
        if isinstance(self.weight_decay, bool) or not isinstance(self.weight_decay, (int, float)) \
                or self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be non-negative, got {self.weight_decay!r}")
        validate_non_negative_int(self.seed, 'seed')
        if self.target_train_metric is not None:
            validate_probability(self.target_train_metric, 'target_train_metric')

    @classmethod
    def for_classifier(cls, **overrides: Any) -> 'TrainingConfig':
        return cls(**{'batch_size': 4, 'schedule': 'step', 'base_lr': 0.005, **overrides})

    @classmethod
    def for_segmenter(cls, **overrides: Any) -> 'TrainingConfig':
        return cls(**{'batch_size': 8, 'schedule': 'two_phase', 'base_lr': 0.001, **overrides})

    def learning_rate(self, epoch: int) -> float:
        if self.schedule == 'step':
            return lr_schedule_classifier(epoch, self.epochs, self.base_lr, self.decay_step, self.decay_factor)
        return lr_schedule_segmenter(epoch, self.epochs, self.base_lr, self.late_lr, self.switch_epoch)

    def to_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> 'TrainingConfig':
        return _from_known(cls, data, 'training')


@dataclass
class PipelineConfig:
    """Configuration of classify → segment → explain runs and of training."""
    classifier: StageConfig = field(default_factory=lambda: StageConfig('densenet', 'densenet169'))
    segmenter: StageConfig = field(default_factory=lambda: StageConfig(
        'deeplab', 'default', input_size=SEGMENTER_INPUT_SIZE))
    scorecam: ScoreCamSettings = field(default_factory=ScoreCamSettings)
    train_classifier: TrainingConfig = field(default_factory=TrainingConfig.for_classifier)
    train_segmenter: TrainingConfig = field(default_factory=TrainingConfig.for_segmenter)
    seg_threshold: float = 0.5
    detection_threshold: float = 0.5
    output_dir: str = 'runs/inspect'
    workers: int = 1
    logging: Dict[str, Any] = field(default_factory=lambda: {'level': 'INFO', 'file': None})

    def __post_init__(self):
        if self.classifier.architecture != 'densenet':
            raise ConfigurationError("classifier stage must use the densenet architecture")
        if self.segmenter.architecture != 'deeplab':
            raise ConfigurationError("segmenter stage must use the deeplab architecture")
        validate_probability(self.seg_threshold, 'seg_threshold')
        validate_probability(self.detection_threshold, 'detection_threshold')
        validate_positive_int(self.workers, 'workers')
        if not isinstance(self.logging, dict):
            raise ConfigurationError(f"logging must be a mapping, got {self.logging!r}")
        self.output_dir = str(self.output_dir)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'classifier': self.classifier.to_dict(),
            'segmenter': self.segmenter.to_dict(),
            'scorecam': self.scorecam.to_dict(),
            'training': {
                'classifier': self.train_classifier.to_dict(),
                'segmenter': self.train_segmenter.to_dict(),
            },
            'seg_threshold': self.seg_threshold,
            'detection_threshold': self.detection_threshold,
            'output_dir': self.output_dir,
            'workers': self.workers,
            'logging': dict(self.logging),
        }

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> 'PipelineConfig':
        """
        Build from a nested mapping; missing sections take their defaults.

        Raises:
            ConfigurationError: On unknown keys or invalid values
        """
        data = dict(data or {})
        known = {'classifier', 'segmenter', 'scorecam', 'training', 'seg_threshold',
                 'detection_threshold', 'output_dir', 'workers', 'logging'}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown pipeline config keys: {unknown}")
        defaults = cls()
        training = data.get('training') or {}
        extra = sorted(set(training) - {'classifier', 'segmenter'})
        if extra:
            raise ConfigurationError(f"unknown keys in training: {extra}")

        def stage(name: str, default: StageConfig) -> StageConfig:
            return _from_known(StageConfig, {**default.to_dict(), **(data.get(name) or {})}, name)

        return cls(
            classifier=stage('classifier', defaults.classifier),
            segmenter=stage('segmenter', defaults.segmenter),
            scorecam=_from_known(ScoreCamSettings, {**defaults.scorecam.to_dict(), **(data.get('scorecam') or {})},
                                 'scorecam'),
            train_classifier=_from_known(
                TrainingConfig, {**defaults.train_classifier.to_dict(), **(training.get('classifier') or {})},
                'training.classifier'),
            train_segmenter=_from_known(
                TrainingConfig, {**defaults.train_segmenter.to_dict(), **(training.get('segmenter') or {})},
                'training.segmenter'),
            seg_threshold=data.get('seg_threshold', defaults.seg_threshold),
            detection_threshold=data.get('detection_threshold', defaults.detection_threshold),
            output_dir=data.get('output_dir', defaults.output_dir),
            workers=data.get('workers', defaults.workers),
            logging=data.get('logging') or defaults.logging,
        )

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None, overrides: Sequence[str] = ()) -> 'PipelineConfig':
        """Load YAML (or defaults when ``path`` is None) and apply dotted overrides."""
        manager = ConfigManager(str(path) if path else None, defaults=cls().to_dict())
        manager.apply_overrides(list(overrides))
        return cls.from_dict(manager.to_dict())

    def save(self, path: Union[str, Path]) -> Path:
        manager = ConfigManager.from_dict(self.to_dict())
        manager.save(path)
        return Path(path)

