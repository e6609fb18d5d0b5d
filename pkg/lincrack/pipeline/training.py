"""
Model Training

Mini-batch SGD for both stages. The classifier trains on every labelled
train record with the step-decay schedule; the segmenter trains on crack
records with masks using per-pixel cross-entropy and the two-phase schedule.
Validation loss is evaluated after every epoch and the weights of the epoch
with the lowest validation loss are the ones saved.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from lincrack.core.exceptions import SplitError, TrainingDivergedError
from lincrack.core.metrics import ConfusionCounts, classification_accuracy, pixel_confusion, seg_scores
from lincrack.core.models import (
    DenseNetConfig,
    ModelGraph,
    SegmenterConfig,
    build_classifier,
    build_segmenter,
    classify_batch,
    save_model_config,
    segment,
)
from lincrack.core.tensor import SGD, Tensor, cross_entropy_loss, no_grad
from lincrack.data.images import load_batch, load_mask_batch
from lincrack.data.manifest import SampleManifest, SampleRecord
from lincrack.data.weights import save_weights
from lincrack.pipeline.config import TrainingConfig
from lincrack.utils.logger import LogContext, get_logger

logger = get_logger(__name__)

EpochCallback = Callable[['EpochRecord'], None]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    train_metric: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            'epoch': self.epoch,
            'lr': self.lr,
            'train_loss': self.train_loss,
            'val_loss': self.val_loss,
            'train_metric': self.train_metric,
        }


@dataclass
class TrainingResult:
    """Outcome of one training run and the files it wrote."""
    name: str
    history: List[EpochRecord]
    best_epoch: int
    best_val_loss: float
    weights_path: Path
    structure_path: Path
    train_curve_path: Path
    val_curve_path: Path
    stopped_early: bool = False
    model: Optional[ModelGraph] = field(default=None, repr=False)

    @property
    def epochs_run(self) -> int:
        return len(self.history)

    @property
    def final_train_metric(self) -> float:
        return self.history[-1].train_metric

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'epochs_run': self.epochs_run,
            'best_epoch': self.best_epoch,
            'best_val_loss': self.best_val_loss,
            'stopped_early': self.stopped_early,
            'weights': str(self.weights_path),
            'structure': str(self.structure_path),
            'train_curve': str(self.train_curve_path),
            'val_curve': str(self.val_curve_path),
            'history': [r.to_dict() for r in self.history],
        }


def write_loss_curve(values: Sequence[float], path: Union[str, Path]) -> Path:
    """Two-column ``epoch,loss`` CSV, one row per epoch."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['epoch', 'loss'])
        for epoch, value in enumerate(values):
            writer.writerow([epoch, repr(float(value))])
    return path


def _split_records(manifest: SampleManifest, split: str,
                   keep: Callable[[SampleRecord], bool]) -> List[SampleRecord]:
    records = [r for r in manifest.by_split(split) if keep(r)]
    if not records:
        raise SplitError(f"the {split} split has no usable records")
    return records


def _batches(count: int, batch_size: int, order: Optional[np.ndarray] = None):
    order = np.arange(count) if order is None else order
    for start in range(0, count, batch_size):
        yield order[start:start + batch_size]


def _mean_loss(model: ModelGraph, images: np.ndarray, targets: np.ndarray, batch_size: int) -> float:
    total = 0.0
    with no_grad():
        for idx in _batches(len(images), batch_size):
            logits = model.forward(Tensor(images[idx]), training=False)
            total += cross_entropy_loss(logits, targets[idx]).item() * len(idx)
    return total / len(images)


def _accuracy(model: ModelGraph, images: np.ndarray, labels: np.ndarray, batch_size: int) -> float:
    preds = []
    for idx in _batches(len(images), batch_size):
        preds.extend(r.label for r in classify_batch(model, Tensor(images[idx])))
    return classification_accuracy(preds, labels)


def micro_iou(model: ModelGraph, images: np.ndarray, masks: np.ndarray, batch_size: int) -> float:
    """Micro-averaged IoU of the thresholded predictions over a B×3×H×W batch and its B×H×W masks."""
    total = ConfusionCounts()
    for idx in _batches(len(images), batch_size):
        preds = segment(model, Tensor(images[idx])).data.astype(np.int64)
        for pred, gt in zip(preds, masks[idx]):
            total = total + pixel_confusion(pred, gt)
    return seg_scores(total).iou


def fit(
    model: ModelGraph,
    train: Tuple[np.ndarray, np.ndarray],
    val: Tuple[np.ndarray, np.ndarray],
    training: TrainingConfig,
    metric: Callable[[ModelGraph, np.ndarray, np.ndarray, int], float],
    name: str = "model",
    on_epoch: Optional[EpochCallback] = None,
) -> Tuple[List[EpochRecord], int, float, bool]:
    """
    Train ``model`` in place and leave it holding the best-validation weights.

    Args:
        train: (images B×3×H×W, targets B or B×H×W)
        val: Same layout as ``train``
        metric: Training-set metric evaluated in inference mode after each epoch

    Returns:
        (history, best epoch, best validation loss, stopped early)

    Raises:
        TrainingDivergedError: If a batch loss is NaN or infinite
    """
    train_x, train_y = train
    val_x, val_y = val
    rng = np.random.default_rng(training.seed)
    optimizer = SGD(model.parameter_list(), lr=training.learning_rate(0),
                    momentum=training.momentum, weight_decay=training.weight_decay)

    history: List[EpochRecord] = []
    best_state: Dict[str, np.ndarray] = model.state_dict()
    best_epoch, best_val = -1, float('inf')
    stopped_early = False

    for epoch in range(training.epochs):
        optimizer.lr = training.learning_rate(epoch)
        running = 0.0
        for step, idx in enumerate(_batches(len(train_x), training.batch_size, rng.permutation(len(train_x)))):
            optimizer.zero_grad()
            logits = model.forward(Tensor(train_x[idx]), training=True)
            loss = cross_entropy_loss(logits, train_y[idx])
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"{name}: loss became {value} at epoch {epoch}, batch {step} (lr={optimizer.lr:g})"
                )
            loss.backward()
            optimizer.step()
            running += value * len(idx)

        record = EpochRecord(
            epoch=epoch,
            lr=optimizer.lr,
            train_loss=running / len(train_x),
            val_loss=_mean_loss(model, val_x, val_y, training.batch_size),
            train_metric=metric(model, train_x, train_y, training.batch_size),
        )
        history.append(record)
        logger.info(f"{name} epoch {epoch + 1}/{training.epochs} lr={record.lr:.2e} "
                    f"train_loss={record.train_loss:.4f} val_loss={record.val_loss:.4f} "
                    f"train_metric={record.train_metric:.4f}")
        if on_epoch is not None:
            on_epoch(record)

        if not np.isfinite(record.val_loss):
            raise TrainingDivergedError(f"{name}: validation loss became {record.val_loss} at epoch {epoch}")
        if record.val_loss < best_val:
            best_val, best_epoch = record.val_loss, epoch
            best_state = model.state_dict()
        if training.target_train_metric is not None and record.train_metric >= training.target_train_metric:
            logger.info(f"{name}: training metric {record.train_metric:.4f} reached target "
                        f"{training.target_train_metric} at epoch {epoch + 1}")
            stopped_early = True
            break

    model.load_state_dict(best_state)
    return history, best_epoch, best_val, stopped_early


def _write_artifacts(model: ModelGraph, history: List[EpochRecord], name: str,
                     output_dir: Union[str, Path]) -> Tuple[Path, Path, Path, Path]:
    output_dir = Path(output_dir)
    weights = save_weights(model, output_dir / f"{name}.nwb")
    structure = save_model_config(model, output_dir / f"{name}.yaml")
    train_curve = write_loss_curve([r.train_loss for r in history], output_dir / f"{name}_train_loss.csv")
    val_curve = write_loss_curve([r.val_loss for r in history], output_dir / f"{name}_val_loss.csv")
    return weights, structure, train_curve, val_curve


def _train(model, train, val, training, metric, name, output_dir, on_epoch) -> TrainingResult:
    with LogContext(logger, f"training {name} ({model.num_parameters()} parameters)"):
        history, best_epoch, best_val, stopped = fit(model, train, val, training, metric, name, on_epoch)
    paths = _write_artifacts(model, history, name, output_dir)
    logger.info(f"{name}: best epoch {best_epoch + 1} (val_loss={best_val:.4f}), weights saved to {paths[0]}")
    return TrainingResult(name, history, best_epoch, best_val, *paths, stopped_early=stopped, model=model)


def train_classifier(
    manifest: SampleManifest,
    config: DenseNetConfig,
    training: Optional[TrainingConfig] = None,
    output_dir: Union[str, Path] = "runs/train",
    name: str = "classifier",
    workers: int = 1,
    on_epoch: Optional[EpochCallback] = None,
) -> TrainingResult:
    """
    Train the crack/background classifier on the manifest's train split.

    Raises:
        SplitError: If the train or val split is empty
        TrainingDivergedError: If the loss becomes non-finite
    """
    training = training or TrainingConfig.for_classifier()
    size = tuple(config.input_size)

    def load(split: str) -> Tuple[np.ndarray, np.ndarray]:
        records = _split_records(manifest, split, lambda r: True)
        images = load_batch([manifest.resolve(r.image_path) for r in records], size, workers).data
        return images, np.array([r.label for r in records], dtype=np.int64)

    train, val = load('train'), load('val')
    logger.info(f"classifier data: {len(train[0])} train, {len(val[0])} val images at {size[0]}x{size[1]}")
    return _train(build_classifier(config), train, val, training, _accuracy, name, output_dir, on_epoch)


def train_segmenter(
    manifest: SampleManifest,
    config: SegmenterConfig,
    training: Optional[TrainingConfig] = None,
    output_dir: Union[str, Path] = "runs/train",
    name: str = "segmenter",
    workers: int = 1,
    on_epoch: Optional[EpochCallback] = None,
) -> TrainingResult:
    """
    Train the segmenter on the crack records (with masks) of the train split.

    Raises:
        DataError: If a crack record has no mask
        SplitError: If the train or val split has no crack records
        TrainingDivergedError: If the loss becomes non-finite
    """
    training = training or TrainingConfig.for_segmenter()
    manifest.validate_for_segmentation()
    size = tuple(config.input_size)

    def load(split: str) -> Tuple[np.ndarray, np.ndarray]:
        records = _split_records(manifest, split, lambda r: r.is_crack)
        images = load_batch([manifest.resolve(r.image_path) for r in records], size, workers).data
        masks = load_mask_batch([manifest.resolve(r.mask_path) for r in records], size, workers)
        return images, masks

    train, val = load('train'), load('val')
    logger.info(f"segmenter data: {len(train[0])} train, {len(val[0])} val crack images at {size[0]}x{size[1]}")
    return _train(build_segmenter(config), train, val, training, micro_iou, name, output_dir, on_epoch)
