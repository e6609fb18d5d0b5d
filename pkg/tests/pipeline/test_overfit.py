"""
Toy-scale training runs: both stages must fit a handful of synthetic images,
and Score-CAM on the fitted segmenter must point at the cracks.
"""

import numpy as np
import pytest

from lincrack.constants import CRACK
from lincrack.core.models import build_segmenter, classifier_preset, segmenter_preset
from lincrack.core.scorecam import ScoreCAM, dilate_region, heatmap_mass_in_region
from lincrack.core.tensor import Tensor
from lincrack.data import SampleManifest, SampleRecord, load_batch, load_mask_batch, synth_dataset
from lincrack.pipeline import TrainingConfig, fit, micro_iou, train_classifier

pytestmark = pytest.mark.slow

# Strokes wide enough for a decoder that predicts at a quarter of the input resolution.
SEGMENTER_CRACK_WIDTH = (6, 8)


def hold_out_one_per_class(generated: SampleManifest) -> SampleManifest:
    """Everything in train except one image of each class, which goes to val."""
    held = {next(r.image_path for r in generated if r.is_crack),
            next(r.image_path for r in generated if not r.is_crack)}
    records = [SampleRecord(r.image_path, r.label, r.mask_path, 'val' if r.image_path in held else 'train')
               for r in generated]
    return SampleManifest(records, generated.metadata, root=generated.root)


@pytest.fixture(scope='module')
def crack_images(tmp_path_factory):
    """Eight 64x64 crack images and their masks."""
    root = tmp_path_factory.mktemp("cracks")
    generated = synth_dataset(root, 9, size=(64, 64), seed=11, crack_fraction=1.0,
                              crack_width=SEGMENTER_CRACK_WIDTH)
    cracks = generated.with_label(CRACK)
    assert len(cracks) == 8
    images = load_batch([generated.resolve(r.image_path) for r in cracks], (64, 64)).data
    masks = load_mask_batch([generated.resolve(r.mask_path) for r in cracks], (64, 64))
    return images, masks


@pytest.fixture(scope='module')
def fitted_segmenter(crack_images):
    """Toy segmenter trained on the eight images; their own loss selects the kept weights."""
    training = TrainingConfig.for_segmenter(epochs=300, batch_size=2, base_lr=0.01, late_lr=0.001,
                                            switch_epoch=150, target_train_metric=0.9)
    model = build_segmenter(segmenter_preset('toy'))
    history, _, _, _ = fit(model, crack_images, crack_images, training, micro_iou, name="segmenter")
    return model, history


def test_classifier_memorizes_ten_images(tmp_path):
    generated = synth_dataset(tmp_path / "corpus", 12, size=(32, 32), seed=7)
    manifest = hold_out_one_per_class(generated)
    assert len(manifest.by_split('train')) == 10

    # ten decay steps over the run, as over the 100-epoch schedule
    training = TrainingConfig.for_classifier(epochs=200, batch_size=2, base_lr=0.02, decay_step=20,
                                             target_train_metric=1.0)
    assert training.learning_rate(20) == pytest.approx(0.1 * training.learning_rate(19))
    result = train_classifier(manifest, classifier_preset('toy'), training, tmp_path / "train")
    assert result.final_train_metric == 1.0
    assert result.epochs_run <= 200


def test_segmenter_reaches_iou(fitted_segmenter):
    _, history = fitted_segmenter
    assert len(history) <= 300
    assert max(record.train_metric for record in history) >= 0.9
    assert history[-1].train_loss < history[0].train_loss


def test_segmenter_two_phase_schedule(fitted_segmenter):
    _, history = fitted_segmenter
    assert history[0].lr == 0.01
    assert all(record.lr == (0.01 if record.epoch < 150 else 0.001) for record in history)


def test_scorecam_focuses_on_cracks(fitted_segmenter, crack_images):
    model, _ = fitted_segmenter
    images, masks = crack_images
    explainer = ScoreCAM(model)
    fractions, uniform = [], []
    for image, mask in zip(images, masks):
        heatmap = explainer.heatmap(Tensor(image[np.newaxis]), 'decoder_output', CRACK).unit_max()
        fractions.append(heatmap_mass_in_region(heatmap, mask, dilation=5))
        uniform.append(dilate_region(mask, 5).mean())
    assert np.mean(fractions) >= 0.6
    assert np.mean(fractions) > np.mean(uniform)
