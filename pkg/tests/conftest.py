"""
Test configuration and fixtures for lincrack tests.
"""

import logging

import numpy as np
import pytest

from lincrack.core.models import build_classifier, build_segmenter, classifier_preset, segmenter_preset
from lincrack.data import SampleManifest, stratified_split, synth_dataset

logging.getLogger("lincrack").setLevel(logging.CRITICAL)


def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line(
        "markers",
        "slow: toy-scale training and localization runs (deselect with -m 'not slow')"
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_classifier():
    return build_classifier(classifier_preset('toy'))


@pytest.fixture
def toy_segmenter():
    return build_segmenter(segmenter_preset('toy'))


@pytest.fixture
def corpus(tmp_path) -> SampleManifest:
    """Ten synthetic 64x64 images (5 crack, 5 background) split 3/1/1 per class."""
    root = tmp_path / "corpus"
    generated = synth_dataset(root, 10, size=(64, 64), seed=7)
    manifest = stratified_split(generated.records, seed=7, metadata=generated.metadata)
    manifest.save(root / "manifest.csv")
    return SampleManifest.load(root / "manifest.csv")
