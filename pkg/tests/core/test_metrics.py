"""
Tests for classification and segmentation metrics and reports.
"""

import csv

import numpy as np
import pytest

from lincrack.core.exceptions import ConfigurationError, ShapeError
from lincrack.core.metrics import (
    ConfusionCounts,
    MetricsReport,
    SegScores,
    TimingStats,
    classification_accuracy,
    classification_counts,
    classification_summary,
    dataset_report,
    detect_decision,
    measure_fps,
    pixel_confusion,
    seg_scores,
)
from lincrack.core.tensor import Tensor


class TestClassificationMetrics:
    def test_accuracy(self):
        assert classification_accuracy([1, 0, 1, 1], [1, 0, 0, 1]) == 0.75

    @pytest.mark.parametrize("preds,truths", [([], []), ([1, 0], [1])])
    def test_accuracy_needs_matching_lists(self, preds, truths):
        with pytest.raises(ConfigurationError):
            classification_accuracy(preds, truths)

    def test_counts(self):
        assert classification_counts([1, 1, 0, 0, 1], [1, 0, 1, 0, 1]) == ConfusionCounts(tp=2, fp=1, fn=1, tn=1)

    def test_summary(self):
        summary = classification_summary([1, 1, 0, 0], [1, 0, 0, 0])
        assert summary['accuracy'] == 0.75
        assert summary['precision'] == 0.5
        assert summary['recall'] == 1.0
        assert summary['support_background'] == 3
        assert summary['support_crack'] == 1

    def test_fps_counts_every_image(self, toy_classifier, rng):
        ticks = iter([10.0, 12.0])
        images = [Tensor(rng.normal(size=(3, 32, 32))) for _ in range(4)]
        stats = measure_fps(toy_classifier, images, clock=lambda: next(ticks))
        assert stats == TimingStats(4, 2.0)
        assert stats.fps == 2.0

    def test_fps_needs_images(self, toy_classifier):
        with pytest.raises(ConfigurationError):
            measure_fps(toy_classifier, [])


class TestPixelMetrics:
    def test_two_by_two_case(self):
        counts = pixel_confusion(np.array([[1, 1], [0, 0]]), np.array([[1, 0], [1, 0]]))
        assert counts == ConfusionCounts(tp=1, fp=1, fn=1, tn=1)
        scores = seg_scores(counts)
        assert scores.precision == 0.5
        assert scores.recall == 0.5
        assert scores.f1 == 0.5
        assert scores.iou == pytest.approx(1 / 3)

    def test_perfect_prediction(self):
        mask = np.array([[0, 1], [1, 1]])
        assert seg_scores(pixel_confusion(mask, mask)) == SegScores(1.0, 1.0, 1.0, 1.0)

    def test_both_empty(self):
        empty = np.zeros((3, 3))
        assert seg_scores(pixel_confusion(empty, empty)) == SegScores(1.0, 1.0, 1.0, 1.0)

    def test_empty_prediction_of_a_crack(self):
        gt = np.zeros((3, 3))
        gt[1, 1] = 1
        assert seg_scores(pixel_confusion(np.zeros((3, 3)), gt)) == SegScores(0.0, 0.0, 0.0, 0.0)

    def test_prediction_on_empty_truth(self):
        pred = np.zeros((3, 3))
        pred[0, 0] = 1
        scores = seg_scores(pixel_confusion(pred, np.zeros((3, 3))))
        assert scores.precision == 0.0
        assert scores.iou == 0.0

    def test_f1_iou_identity(self, rng):
        for tp, fp, fn, tn in rng.integers(0, 50, size=(1000, 4)):
            scores = seg_scores(ConfusionCounts(int(tp), int(fp), int(fn), int(tn)))
            assert scores.f1 == pytest.approx(2 * scores.iou / (1 + scores.iou), abs=1e-12)

    def test_swapping_masks_swaps_precision_and_recall(self, rng):
        a = rng.integers(0, 2, size=(8, 8))
        b = rng.integers(0, 2, size=(8, 8))
        ab, ba = seg_scores(pixel_confusion(a, b)), seg_scores(pixel_confusion(b, a))
        assert ab.precision == ba.recall
        assert ab.iou == ba.iou
        assert pixel_confusion(a, b).swapped() == pixel_confusion(b, a)

    def test_accepts_tensors(self):
        mask = Tensor(np.eye(3))
        assert pixel_confusion(mask, mask).tp == 3

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            pixel_confusion(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_non_binary_mask(self):
        with pytest.raises(ShapeError):
            pixel_confusion(np.full((2, 2), 0.5), np.zeros((2, 2)))

    def test_counts_validation(self):
        with pytest.raises(ConfigurationError):
            ConfusionCounts(tp=-1)

    def test_counts_add(self):
        assert ConfusionCounts(1, 2, 3, 4) + ConfusionCounts(1, 1, 1, 1) == ConfusionCounts(2, 3, 4, 5)


class TestDetection:
    def test_strict_threshold(self):
        assert not detect_decision(0.5, 0.5)
        assert detect_decision(0.5000001, 0.5)
        assert not detect_decision(0.0, 0.0)

    def test_invalid_iou(self):
        with pytest.raises(ConfigurationError):
            detect_decision(1.2)


def _pair(pred_pixels, gt_pixels, size=4):
    pred, gt = np.zeros((size, size), dtype=np.int64), np.zeros((size, size), dtype=np.int64)
    pred.flat[pred_pixels] = 1
    gt.flat[gt_pixels] = 1
    return pred, gt


class TestDatasetReport:
    @pytest.fixture
    def report(self):
        return dataset_report([
            _pair([0, 1], [0, 1]),        # IoU 1
            _pair([0, 1], [1, 2]),        # IoU 1/3
            _pair([0, 1, 2, 3], [0]),     # IoU 1/4
        ])

    def test_micro_and_macro(self, report):
        assert report.images == 3
        assert report.counts == ConfusionCounts(tp=4, fp=4, fn=1, tn=39)
        assert report.micro.iou == pytest.approx(4 / 9)
        assert report.macro.iou == pytest.approx((1 + 1 / 3 + 1 / 4) / 3)

    def test_detection(self, report):
        assert report.detected == 1
        assert report.detection_rate == pytest.approx(1 / 3)

    def test_detection_threshold_zero(self):
        report = dataset_report([_pair([0], [0]), _pair([0], [1])], d=0.0)
        assert report.detected == 1

    def test_parallel_matches_serial(self, rng):
        pairs = [(rng.integers(0, 2, (8, 8)), rng.integers(0, 2, (8, 8))) for _ in range(6)]
        assert dataset_report(pairs, workers=3) == dataset_report(pairs)

    def test_needs_pairs(self):
        with pytest.raises(ConfigurationError):
            dataset_report([])

    def test_empty_report(self):
        report = MetricsReport.empty(0.7)
        assert report.images == 0
        assert report.detection_rate == 0.0
        assert report.detection_threshold == 0.7

    def test_yaml_round_trip(self, report, tmp_path):
        report.classification = classification_summary([1, 0], [1, 1])
        report.timing = TimingStats(3, 1.5)
        path = report.to_yaml(tmp_path / "eval" / "metrics.yaml")
        assert MetricsReport.from_yaml(path) == report

    def test_malformed_report(self):
        with pytest.raises(ConfigurationError):
            MetricsReport.from_dict({'images': 1})

    def test_csv(self, report, tmp_path):
        path = report.to_csv(tmp_path / "metrics.csv")
        with open(path, newline='') as f:
            rows = list(csv.reader(f))
        assert rows[0] == ['section', 'metric', 'value']
        lookup = {(section, metric): float(value) for section, metric, value in rows[1:]}
        assert lookup[('micro', 'iou')] == pytest.approx(4 / 9)
        assert lookup[('detection', 'detected')] == 1.0

    def test_render_table(self, report):
        table = report.render_table()
        assert table.row_count == 5
