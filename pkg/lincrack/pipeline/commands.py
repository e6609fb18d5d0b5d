"""
Pipeline Commands

``explain`` (Score-CAM heatmaps and overlays for one image) and ``eval``
(test-split metrics for both stages). The CLI calls these after loading the
pipeline configuration.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from lincrack.constants import CLASS_NAMES, CRACK
from lincrack.core.exceptions import ConfigurationError, SplitError
from lincrack.core.metrics import (
    MetricsReport,
    classification_summary,
    dataset_report,
    measure_fps,
)
from lincrack.core.models import ModelGraph, classify, segment
from lincrack.core.scorecam import ScoreCAM, overlay, save_heatmap, save_overlay
from lincrack.core.tensor import Tensor
from lincrack.data.images import denormalize_image, load_image, load_mask
from lincrack.data.manifest import SampleManifest
from lincrack.pipeline.config import PipelineConfig
from lincrack.utils.concurrency import ordered_map
from lincrack.utils.logger import LogContext, get_logger

logger = get_logger(__name__)

EXPLAIN_STAGES = ('classifier', 'segmenter')


def explanation_paths(output_dir: Path, stem: str, tap: str, class_index: int) -> Dict[str, Path]:
    """Heatmap and overlay file names; both encode the tap and the class."""
    base = f"{stem}_{tap}_{CLASS_NAMES[class_index]}"
    return {
        'heatmap': output_dir / f"{base}_heatmap.png",
        'overlay': output_dir / f"{base}_overlay.png",
    }


def write_explanations(
    model: ModelGraph,
    image: Tensor,
    taps: Sequence[str],
    class_index: int,
    output_dir: Union[str, Path],
    stem: str,
    reduction: str = 'mean',
    batch_size: int = 16,
    alpha: float = 0.5,
    workers: int = 1,
) -> List[Path]:
    """
    Compute one Score-CAM heatmap per tap and write it with its overlay.

    Heatmaps are resized to the image, scaled to unit max and blended over
    the de-standardized image.

    Returns:
        Written paths, heatmap then overlay for each tap in order

    Raises:
        UnknownTapError: If a tap is not exposed by the model
    """
    for tap in taps:
        model.resolve_tap(tap)
    output_dir = Path(output_dir)
    explainer = ScoreCAM(model, reduction=reduction, batch_size=batch_size, workers=workers)
    display = denormalize_image(image)
    height, width = display.shape[1:]

    written: List[Path] = []
    for tap in taps:
        heatmap = explainer.heatmap(image, tap, class_index).resized(height, width).unit_max()
        paths = explanation_paths(output_dir, stem, tap, class_index)
        written.append(save_heatmap(heatmap, paths['heatmap']))
        written.append(save_overlay(overlay(heatmap, display, alpha), paths['overlay']))
    logger.debug(f"{stem}: {len(taps)} heatmaps in {explainer.forward_passes} forward passes")
    return written


def explain_command(
    config: PipelineConfig,
    image_path: Union[str, Path],
    taps: Optional[Sequence[str]] = None,
    class_index: Optional[int] = None,
    output_dir: Optional[Union[str, Path]] = None,
    stage: str = 'segmenter',
    model: Optional[ModelGraph] = None,
) -> List[Path]:
    """
    Write a heatmap and an overlay per tap for one image.

    Taps and class default to the ``scorecam`` section of the config; files
    go to ``<output_dir>/explain`` unless an output directory is given.

    Raises:
        ConfigurationError: On an unknown stage, an empty tap list or a bad class
        UnknownTapError: If a tap is not exposed by the model
        MissingWeightsError: If the stage's weights are missing and no model is given
    """
    if stage not in EXPLAIN_STAGES:
        raise ConfigurationError(f"stage must be one of {EXPLAIN_STAGES}, got {stage!r}")
    settings = config.scorecam
    taps = tuple(taps) if taps else settings.taps
    if not taps:
        raise ConfigurationError("explain needs at least one tap")
    class_index = settings.class_index if class_index is None else class_index
    if class_index not in range(len(CLASS_NAMES)):
        raise ConfigurationError(f"class_index must be 0 or 1, got {class_index!r}")

    stage_config = config.classifier if stage == 'classifier' else config.segmenter
    model = model if model is not None else stage_config.build()
    height, width = model.input_size
    image = load_image(image_path, height, width)
    output_dir = Path(output_dir) if output_dir else Path(config.output_dir) / "explain"

    with LogContext(logger, f"explaining {Path(image_path).name} at {len(taps)} taps"):
        return write_explanations(model, image, taps, class_index, output_dir, Path(image_path).stem,
                                  settings.reduction, settings.batch_size, settings.alpha, config.workers)


def eval_command(
    config: PipelineConfig,
    manifest: SampleManifest,
    output_path: Optional[Union[str, Path]] = None,
    classifier: Optional[ModelGraph] = None,
    segmenter: Optional[ModelGraph] = None,
) -> MetricsReport:
    """
    Score both stages on the manifest's test split.

    Stage 1 reports accuracy, crack precision/recall, per-class support and
    FPS over every test record. Stage 2 is scored on the crack-labelled test
    records (ground-truth routing) with micro and macro aggregation and the
    detection rate. The report is written as YAML plus a CSV next to it.

    Raises:
        SplitError: If the test split is empty
        DataError: If a crack test record has no mask
        MissingWeightsError: If weights are missing and no model is given
    """
    records = manifest.by_split('test')
    if not records:
        raise SplitError("the test split is empty")
    manifest.validate_for_segmentation()
    classifier = classifier if classifier is not None else config.classifier.build()
    segmenter = segmenter if segmenter is not None else config.segmenter.build()
    workers = config.workers

    with LogContext(logger, f"stage 1 evaluation on {len(records)} test images"):
        height, width = classifier.input_size
        images = ordered_map(lambda r: load_image(manifest.resolve(r.image_path), height, width),
                             records, workers=workers)
        preds = [classify(classifier, image).label for image in images]
        truths = [r.label for r in records]
        summary = classification_summary(preds, truths)
        timing = measure_fps(classifier, images)

    cracks = [r for r in records if r.label == CRACK]
    if cracks:
        with LogContext(logger, f"stage 2 evaluation on {len(cracks)} crack test images"):
            height, width = segmenter.input_size

            def score(record):
                image = load_image(manifest.resolve(record.image_path), height, width)
                gt = load_mask(manifest.resolve(record.mask_path), height, width)
                pred = segment(segmenter, image, config.seg_threshold)
                return pred.data.astype(np.int64), gt.data.astype(np.int64)

            report = dataset_report(ordered_map(score, cracks, workers=workers), config.detection_threshold)
    else:
        logger.warning("no crack records in the test split; segmentation section is empty")
        report = MetricsReport.empty(config.detection_threshold)

    report.classification = summary
    report.timing = timing
    if output_path is None:
        output_path = Path(config.output_dir) / "eval" / "metrics.yaml"
    output_path = Path(output_path)
    report.to_yaml(output_path)
    report.to_csv(output_path.with_suffix('.csv'))
    logger.info(f"accuracy={summary['accuracy']:.4f} fps={timing.fps:.2f} "
                f"micro_iou={report.micro.iou:.4f} macro_iou={report.macro.iou:.4f} "
                f"detection_rate={report.detection_rate:.4f}; report written to {output_path}")
    return report


def eval_summary(report: MetricsReport) -> Dict[str, Any]:
    """Headline numbers of an evaluation report."""
    summary: Dict[str, Any] = {
        'images': report.images,
        'micro_iou': report.micro.iou,
        'macro_iou': report.macro.iou,
        'detection_rate': report.detection_rate,
    }
    if report.classification is not None:
        summary['accuracy'] = report.classification['accuracy']
    if report.timing is not None:
        summary['fps'] = report.timing.fps
    return summary
