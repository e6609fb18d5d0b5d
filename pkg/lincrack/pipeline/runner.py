"""
Two-Stage Inspection Run

Stage 1 classifies every manifest image; only images labelled crack go on
to stage 2, which writes a binary crack mask and, when the record carries a
ground-truth mask, its segmentation scores. Score-CAM heatmaps for routed
images are optional. A failure on one record is logged, recorded on that
record and does not stop the run.
"""

import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Set, Tuple, Union

import numpy as np
import yaml
from rich.console import Console
from rich.table import Table

from lincrack.constants import CLASS_NAMES, CRACK
from lincrack.core.exceptions import PipelineError
from lincrack.core.metrics import (
    MetricsReport,
    SegScores,
    TimingStats,
    classification_summary,
    dataset_report,
    pixel_confusion,
    seg_scores,
)
from lincrack.core.models import ModelGraph, classify, segment
from lincrack.data.images import load_image, load_mask, save_mask
from lincrack.data.manifest import SampleManifest, SampleRecord
from lincrack.pipeline.commands import write_explanations
from lincrack.pipeline.config import PipelineConfig
from lincrack.utils.concurrency import ordered_map
from lincrack.utils.error_logger import describe_error, error_handler, log_error
from lincrack.utils.logger import LogContext, get_logger

logger = get_logger(__name__)

RUN_REPORT_VERSION = 1


@dataclass
class RecordResult:
    """Outcome of one manifest record."""
    index: int
    image_path: str
    label: int
    probabilities: Optional[Tuple[float, float]] = None
    predicted: Optional[int] = None
    mask_path: Optional[str] = None
    scores: Optional[SegScores] = None
    heatmaps: List[str] = field(default_factory=list)
    heatmap_error: Optional[str] = None
    error: Optional[str] = None

    @property
    def routed(self) -> bool:
        return self.predicted == CRACK

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'image_path': self.image_path,
            'label': CLASS_NAMES[self.label],
            'predicted': CLASS_NAMES[self.predicted] if self.predicted is not None else None,
            'probabilities': list(self.probabilities) if self.probabilities else None,
            'mask_path': self.mask_path,
            'scores': self.scores.to_dict() if self.scores else None,
            'heatmaps': list(self.heatmaps),
            'heatmap_error': self.heatmap_error,
            'error': self.error,
        }


@dataclass
class RunReport:
    """Per-record results, stage timings and aggregate metrics of one run."""
    records: List[RecordResult]
    output_dir: Path
    metrics: Optional[MetricsReport] = None
    classification: Optional[Dict[str, Any]] = None
    timing: Dict[str, TimingStats] = field(default_factory=dict)

    @property
    def routed(self) -> Set[str]:
        return {r.image_path for r in self.records if r.routed}

    @property
    def segmented(self) -> Set[str]:
        return {r.image_path for r in self.records if r.mask_path is not None}

    @property
    def failures(self) -> List[RecordResult]:
        return [r for r in self.records if r.failed]

    def to_dict(self, include_timing: bool = True) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            'format_version': RUN_REPORT_VERSION,
            'images': len(self.records),
            'routed': sum(r.routed for r in self.records),
            'failed': len(self.failures),
            'heatmap_failures': sum(r.heatmap_error is not None for r in self.records),
            'records': [r.to_dict() for r in self.records],
            'classification': self.classification,
            'segmentation': None,
        }
        if self.metrics is not None:
            metrics = self.metrics.to_dict()
            metrics.pop('timing', None)
            data['segmentation'] = metrics
        if include_timing:
            data['timing'] = {stage: stats.to_dict() for stage, stats in self.timing.items()}
        return data

    def save(self, path: Optional[Union[str, Path]] = None) -> Path:
        """Write the YAML report, plus the metrics CSV when stage 2 was scored."""
        path = Path(path) if path else self.output_dir / "report.yaml"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as f:
            yaml.safe_dump(self.to_dict(), f, default_flow_style=False, sort_keys=False)
        if self.metrics is not None:
            self.metrics.to_csv(path.with_name(f"{path.stem}_metrics.csv"))
        return path

    def render_table(self, console: Optional[Console] = None) -> Table:
        table = Table(title=f"Inspection run ({len(self.records)} images)")
        table.add_column("Image", style="cyan")
        table.add_column("Label")
        table.add_column("Predicted")
        table.add_column("P(crack)", justify="right")
        table.add_column("IoU", justify="right")
        table.add_column("Status")
        for r in self.records:
            table.add_row(
                r.image_path,
                CLASS_NAMES[r.label],
                CLASS_NAMES[r.predicted] if r.predicted is not None else "-",
                f"{r.probabilities[CRACK]:.3f}" if r.probabilities else "-",
                f"{r.scores.iou:.3f}" if r.scores else "-",
                _status(r),
            )
        if console is not None:
            console.print(table)
        return table


class _StageClock:
    """Accumulates model time of one stage across records."""

    def __init__(self):
        self.count = 0
        self.seconds = 0.0
        self._lock = threading.Lock()

    def timed(self, func, *args, **kwargs):
        start = time.perf_counter()
        result = func(*args, **kwargs)
        elapsed = time.perf_counter() - start
        with self._lock:
            self.seconds += elapsed
            self.count += 1
        return result

    def stats(self) -> TimingStats:
        return TimingStats(self.count, self.seconds)


def _status(result: RecordResult) -> str:
    if result.error:
        return f"[red]{result.error}[/red]"
    if result.heatmap_error:
        return f"[yellow]heatmaps: {result.heatmap_error}[/yellow]"
    return "[green]ok[/green]"


def _mask_name(result: RecordResult) -> str:
    return f"{result.index:04d}_{Path(result.image_path).stem}.png"


def run_pipeline(
    config: PipelineConfig,
    manifest: SampleManifest,
    classifier: Optional[ModelGraph] = None,
    segmenter: Optional[ModelGraph] = None,
) -> RunReport:
    """
    Classify every image, segment the ones labelled crack and write the report.

    Outputs under ``config.output_dir``: ``masks/`` (0/255 PNGs for routed
    images), ``heatmaps/`` when Score-CAM is enabled, ``report.yaml`` and
    ``report_metrics.csv``.

    Raises:
        PipelineError: If the manifest is empty
        MissingWeightsError: If weights are missing and no model is given
    """
    if len(manifest) == 0:
        raise PipelineError("manifest has no records")
    classifier = classifier if classifier is not None else config.classifier.build()
    segmenter = segmenter if segmenter is not None else config.segmenter.build()
    output_dir = Path(config.output_dir)
    results = [RecordResult(i, r.image_path, r.label) for i, r in enumerate(manifest)]
    by_index: Dict[int, SampleRecord] = dict(enumerate(manifest))

    cls_clock = _StageClock()
    cls_size = classifier.input_size

    def stage_one(result: RecordResult) -> RecordResult:
        try:
            image = load_image(manifest.resolve(result.image_path), *cls_size)
            decision = cls_clock.timed(classify, classifier, image)
            result.probabilities = decision.probs
            result.predicted = decision.label
        except Exception as e:
            log_error(e, context=f"stage 1 failed for {result.image_path}", level='warning')
            result.error = describe_error(e)
        return result

    with LogContext(logger, f"stage 1 on {len(results)} images", items=len(results)):
        results = ordered_map(stage_one, results, workers=config.workers)

    seg_clock = _StageClock()
    seg_size = segmenter.input_size
    settings = config.scorecam

    def record_heatmap_error(error: Exception, image, result: RecordResult) -> None:
        result.heatmap_error = describe_error(error)

    @error_handler(default=[], context="heatmap emission failed", level='warning', on_error=record_heatmap_error)
    def emit_heatmaps(image, result: RecordResult) -> List[str]:
        paths = write_explanations(segmenter, image, settings.taps, settings.class_index,
                                   output_dir / "heatmaps", Path(_mask_name(result)).stem,
                                   settings.reduction, settings.batch_size, settings.alpha)
        return [str(p) for p in paths]

    def stage_two(result: RecordResult) -> Tuple[RecordResult, Optional[Tuple[np.ndarray, np.ndarray]]]:
        record = by_index[result.index]
        pair = None
        try:
            image = load_image(manifest.resolve(record.image_path), *seg_size)
            mask = seg_clock.timed(segment, segmenter, image, config.seg_threshold)
            result.mask_path = str(save_mask(mask, output_dir / "masks" / _mask_name(result)))
            if record.mask_path:
                gt = load_mask(manifest.resolve(record.mask_path), *seg_size)
                pair = (mask.data.astype(np.int64), gt.data.astype(np.int64))
                result.scores = seg_scores(pixel_confusion(*pair))
            if settings.enabled:
                result.heatmaps = emit_heatmaps(image, result)
        except Exception as e:
            log_error(e, context=f"stage 2 failed for {result.image_path}", level='warning')
            result.error = describe_error(e)
        return result, pair

    routed = [r for r in results if r.routed]
    pairs = []
    with LogContext(logger, f"stage 2 on {len(routed)} routed images", items=len(routed)):
        for result, pair in ordered_map(stage_two, routed, workers=config.workers):
            if pair is not None:
                pairs.append(pair)

    classified = [r for r in results if r.predicted is not None]
    report = RunReport(
        records=results,
        output_dir=output_dir,
        metrics=dataset_report(pairs, config.detection_threshold) if pairs else None,
        classification=classification_summary([r.predicted for r in classified],
                                               [r.label for r in classified]) if classified else None,
        timing={'classification': cls_clock.stats(), 'segmentation': seg_clock.stats()},
    )
    path = report.save()
    logger.info(f"{len(routed)}/{len(results)} images routed to segmentation, "
                f"{len(report.failures)} failed; report written to {path}")
    return report
