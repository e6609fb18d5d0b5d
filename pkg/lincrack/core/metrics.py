"""
lincrack Metrics

Evaluation arithmetic: classification accuracy, confusion counts and
throughput, pixel-level precision/recall/F1/IoU, the IoU-threshold
detection rule and dataset reports with micro and macro aggregation.
"""

import csv
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from rich.console import Console
from rich.table import Table

from lincrack.constants import CRACK
from lincrack.core.exceptions import ConfigurationError, ShapeError
from lincrack.core.tensor import Tensor, no_grad
from lincrack.utils.concurrency import ordered_map
from lincrack.utils.logger import get_logger
from lincrack.utils.validation import validate_probability

logger = get_logger(__name__)

DEFAULT_DETECTION_THRESHOLD = 0.5
REPORT_VERSION = 1

ArrayLike = Union[np.ndarray, Tensor, Sequence]


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion counts with crack as the positive class."""
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        for name in ('tp', 'fp', 'fn', 'tn'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 0:
                raise ConfigurationError(f"{name} must be a non-negative integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def predicted_positive(self) -> int:
        return self.tp + self.fp

    @property
    def actual_positive(self) -> int:
        return self.tp + self.fn

    def __add__(self, other: 'ConfusionCounts') -> 'ConfusionCounts':
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    def swapped(self) -> 'ConfusionCounts':
        """Counts with prediction and ground truth exchanged."""
        return ConfusionCounts(self.tp, self.fn, self.fp, self.tn)

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)


@dataclass(frozen=True)
class SegScores:
    """Precision, recall, F1 and IoU, each in [0, 1]."""
    precision: float
    recall: float
    f1: float
    iou: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def mean(cls, scores: Sequence['SegScores']) -> 'SegScores':
        if not scores:
            raise ConfigurationError("cannot average an empty score list")
        return cls(*(float(np.mean([getattr(s, name) for s in scores]))
                     for name in ('precision', 'recall', 'f1', 'iou')))


@dataclass(frozen=True)
class TimingStats:
    """Throughput of single-image forwards."""
    count: int
    seconds: float

    @property
    def fps(self) -> float:
        return self.count / self.seconds if self.seconds > 0 else float('inf')

    def to_dict(self) -> Dict[str, float]:
        return {'count': self.count, 'seconds': self.seconds, 'fps': self.fps}


def _labels(values: ArrayLike) -> np.ndarray:
    data = values.data if isinstance(values, Tensor) else values
    return np.asarray(data).reshape(-1)


def classification_accuracy(preds: ArrayLike, truths: ArrayLike) -> float:
    """
    Fraction of predictions equal to the truth.

    Raises:
        ConfigurationError: If inputs are empty or differ in length
    """
    preds, truths = _labels(preds), _labels(truths)
    if preds.size == 0 or preds.shape != truths.shape:
        raise ConfigurationError(f"need equal nonempty label lists, got {preds.size} and {truths.size}")
    return float(np.count_nonzero(preds == truths) / preds.size)


def classification_counts(preds: ArrayLike, truths: ArrayLike) -> ConfusionCounts:
    """Image-level confusion counts, crack positive."""
    preds, truths = _labels(preds), _labels(truths)
    if preds.size == 0 or preds.shape != truths.shape:
        raise ConfigurationError(f"need equal nonempty label lists, got {preds.size} and {truths.size}")
    pred_pos, true_pos = preds == CRACK, truths == CRACK
    return ConfusionCounts(
        tp=int(np.count_nonzero(pred_pos & true_pos)),
        fp=int(np.count_nonzero(pred_pos & ~true_pos)),
        fn=int(np.count_nonzero(~pred_pos & true_pos)),
        tn=int(np.count_nonzero(~pred_pos & ~true_pos)),
    )


def measure_fps(model, images: Sequence[Tensor], clock=time.perf_counter) -> TimingStats:
    """
    Time sequential single-image forwards after one untimed warm-up pass.

    Only model evaluation is timed; loading and resizing are excluded.

    Raises:
        ConfigurationError: If ``images`` is empty
    """
    images = list(images)
    if not images:
        raise ConfigurationError("measure_fps needs at least one image")
    batches = [img if img.ndim == 4 else Tensor(img.data[np.newaxis]) for img in images]
    with no_grad():
        model.forward(batches[0])
        start = clock()
        for batch in batches:
            model.forward(batch)
        seconds = clock() - start
    stats = TimingStats(len(batches), float(seconds))
    logger.info(f"Measured {stats.count} images in {stats.seconds:.3f}s ({stats.fps:.2f} fps)")
    return stats


def _binary_mask(mask: ArrayLike, name: str) -> np.ndarray:
    data = np.asarray(mask.data if isinstance(mask, Tensor) else mask)
    if not np.all((data == 0) | (data == 1)):
        raise ShapeError(f"{name} must contain only 0 and 1")
    return data.astype(bool)


def pixel_confusion(pred_mask: ArrayLike, gt_mask: ArrayLike) -> ConfusionCounts:
    """
    Pixel-level confusion counts of two binary masks.

    Raises:
        ShapeError: If shapes differ or a value is not 0/1
    """
    pred, gt = _binary_mask(pred_mask, 'pred_mask'), _binary_mask(gt_mask, 'gt_mask')
    if pred.shape != gt.shape:
        raise ShapeError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    return ConfusionCounts(
        tp=int(np.count_nonzero(pred & gt)),
        fp=int(np.count_nonzero(pred & ~gt)),
        fn=int(np.count_nonzero(~pred & gt)),
        tn=int(np.count_nonzero(~pred & ~gt)),
    )


def _ratio(num: int, den: int, both_empty: bool) -> float:
    if den == 0:
        return 1.0 if both_empty else 0.0
    return num / den


def seg_scores(counts: ConfusionCounts) -> SegScores:
    """
    Precision, recall, F1 and IoU from confusion counts.

    A 0/0 ratio is 1 when prediction and truth are both empty, else 0.
    """
    both_empty = counts.predicted_positive == 0 and counts.actual_positive == 0
    precision = _ratio(counts.tp, counts.tp + counts.fp, both_empty)
    recall = _ratio(counts.tp, counts.tp + counts.fn, both_empty)
    f1 = _ratio(2 * counts.tp, 2 * counts.tp + counts.fp + counts.fn, both_empty)
    iou = _ratio(counts.tp, counts.tp + counts.fp + counts.fn, both_empty)
    return SegScores(precision, recall, f1, iou)


def detect_decision(iou: float, d: float = DEFAULT_DETECTION_THRESHOLD) -> bool:
    """True when IoU strictly exceeds the threshold d."""
    validate_probability(iou, 'iou')
    return iou > d


@dataclass
class MetricsReport:
    """
    Segmentation results over a dataset.

    ``micro`` scores come from counts summed over all images; ``macro`` is
    the mean of per-image scores. Optional classifier results ride along.
    """
    images: int
    counts: ConfusionCounts
    micro: SegScores
    macro: SegScores
    detection_threshold: float
    detected: int
    per_image: List[SegScores] = field(default_factory=list)
    classification: Optional[Dict[str, Any]] = None
    timing: Optional[TimingStats] = None

    @classmethod
    def empty(cls, detection_threshold: float = DEFAULT_DETECTION_THRESHOLD) -> 'MetricsReport':
        """Report for a run in which no image reached segmentation."""
        zero = SegScores(0.0, 0.0, 0.0, 0.0)
        return cls(0, ConfusionCounts(), zero, zero, detection_threshold, 0)

    @property
    def detection_rate(self) -> float:
        return self.detected / self.images if self.images else 0.0

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'format_version': REPORT_VERSION,
            'images': self.images,
            'counts': self.counts.to_dict(),
            'micro': self.micro.to_dict(),
            'macro': self.macro.to_dict(),
            'detection': {
                'threshold': self.detection_threshold,
                'detected': self.detected,
                'rate': self.detection_rate,
            },
            'per_image': [s.to_dict() for s in self.per_image],
        }
        if self.classification is not None:
            data['classification'] = self.classification
        if self.timing is not None:
            data['timing'] = self.timing.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MetricsReport':
        try:
            timing = data.get('timing')
            return cls(
                images=int(data['images']),
                counts=ConfusionCounts(**data['counts']),
                micro=SegScores(**data['micro']),
                macro=SegScores(**data['macro']),
                detection_threshold=float(data['detection']['threshold']),
                detected=int(data['detection']['detected']),
                per_image=[SegScores(**s) for s in data.get('per_image', [])],
                classification=data.get('classification'),
                timing=TimingStats(int(timing['count']), float(timing['seconds'])) if timing else None,
            )
        except (KeyError, TypeError) as e:
            raise ConfigurationError(f"malformed metrics report: {e}") from e

    def to_yaml(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as f:
            yaml.safe_dump(self.to_dict(), f, default_flow_style=False, sort_keys=False)
        return path

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> 'MetricsReport':
        with open(path, 'r') as f:
            return cls.from_dict(yaml.safe_load(f))

    def rows(self) -> List[Tuple[str, str, float]]:
        """Flat (section, metric, value) rows."""
        rows = [('counts', k, float(v)) for k, v in self.counts.to_dict().items()]
        rows += [('micro', k, v) for k, v in self.micro.to_dict().items()]
        rows += [('macro', k, v) for k, v in self.macro.to_dict().items()]
        rows += [('detection', 'threshold', self.detection_threshold),
                 ('detection', 'detected', float(self.detected)),
                 ('detection', 'rate', self.detection_rate)]
        if self.classification:
            rows += [('classification', k, float(v)) for k, v in self.classification.items()
                     if isinstance(v, (int, float))]
        if self.timing:
            rows += [('timing', k, float(v)) for k, v in self.timing.to_dict().items()]
        return rows

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['section', 'metric', 'value'])
            writer.writerows(self.rows())
        return path

    def render_table(self, console: Optional[Console] = None) -> Table:
        table = Table(title=f"Segmentation metrics ({self.images} images)")
        table.add_column("Metric", style="cyan")
        table.add_column("Micro", justify="right")
        table.add_column("Macro", justify="right")
        for name in ('precision', 'recall', 'f1', 'iou'):
            table.add_row(name, f"{getattr(self.micro, name):.4f}", f"{getattr(self.macro, name):.4f}")
        table.add_row("detection rate", f"{self.detection_rate:.4f}", "")
        if console is not None:
            console.print(table)
        return table


def dataset_report(
    per_image: Iterable[Tuple[ArrayLike, ArrayLike]],
    d: float = DEFAULT_DETECTION_THRESHOLD,
    workers: int = 1,
) -> MetricsReport:
    """
    Score (pred_mask, gt_mask) pairs with both aggregation modes.

    Detection counts the images whose IoU strictly exceeds ``d``.

    Raises:
        ConfigurationError: If no pairs are given
    """
    pairs = list(per_image)
    if not pairs:
        raise ConfigurationError("dataset_report needs at least one image")
    validate_probability(d, 'd')
    counts = ordered_map(lambda pair: pixel_confusion(*pair), pairs, workers=workers)
    scores = [seg_scores(c) for c in counts]
    total = sum(counts, ConfusionCounts())
    return MetricsReport(
        images=len(pairs),
        counts=total,
        micro=seg_scores(total),
        macro=SegScores.mean(scores),
        detection_threshold=d,
        detected=sum(detect_decision(s.iou, d) for s in scores),
        per_image=scores,
    )


def classification_summary(preds: ArrayLike, truths: ArrayLike) -> Dict[str, Any]:
    """Accuracy, crack precision/recall and per-class support of a classifier run."""
    counts = classification_counts(preds, truths)
    scores = seg_scores(counts)
    return {
        'accuracy': classification_accuracy(preds, truths),
        'precision': scores.precision,
        'recall': scores.recall,
        'f1': scores.f1,
        'support_background': counts.fp + counts.tn,
        'support_crack': counts.tp + counts.fn,
        'counts': counts.to_dict(),
    }
