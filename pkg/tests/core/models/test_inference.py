"""
Tests for classification and segmentation decisions and structure documents.
"""

import numpy as np
import pytest
import yaml

from lincrack.constants import BACKGROUND, CRACK
from lincrack.core.exceptions import ConfigurationError, InputSizeError
from lincrack.core.models import (
    DenseNetConfig,
    build_model,
    classifier_preset,
    classify,
    classify_batch,
    config_from_document,
    crack_probability,
    decide_label,
    forward_with_taps,
    load_model_config,
    save_model_config,
    segment,
    segmenter_preset,
)
from lincrack.core.tensor import Tensor


class TestClassification:
    def test_tie_goes_to_crack(self):
        assert decide_label(np.array([0.3, 0.3])) == CRACK
        assert decide_label(np.array([0.4, 0.3])) == BACKGROUND
        assert decide_label(np.array([-1.0, 2.0])) == CRACK

    def test_probabilities_sum_to_one(self, toy_classifier, rng):
        result = classify(toy_classifier, Tensor(rng.normal(size=(1, 3, 32, 32))))
        assert sum(result.probs) == pytest.approx(1.0)
        assert result.label == (CRACK if result.probs[CRACK] >= result.probs[BACKGROUND] else BACKGROUND)
        assert result.label_name in ('background', 'crack')

    def test_accepts_unbatched_image(self, toy_classifier, rng):
        image = rng.normal(size=(3, 32, 32))
        assert classify(toy_classifier, Tensor(image)) == classify(toy_classifier, Tensor(image[np.newaxis]))

    def test_rejects_batches(self, toy_classifier, rng):
        with pytest.raises(InputSizeError):
            classify(toy_classifier, Tensor(rng.normal(size=(2, 3, 32, 32))))

    def test_batch_matches_single(self, toy_classifier, rng):
        images = rng.normal(size=(3, 3, 32, 32))
        batch = classify_batch(toy_classifier, Tensor(images))
        for image, result in zip(images, batch):
            single = classify(toy_classifier, Tensor(image))
            assert single.label == result.label
            np.testing.assert_allclose(single.probs, result.probs, rtol=1e-10)


class TestSegmentation:
    def test_single_image_mask(self, toy_segmenter, rng):
        mask = segment(toy_segmenter, Tensor(rng.normal(size=(1, 3, 64, 64))))
        assert mask.shape == (64, 64)
        assert set(np.unique(mask.data)) <= {0.0, 1.0}

    def test_batch_mask(self, toy_segmenter, rng):
        assert segment(toy_segmenter, Tensor(rng.normal(size=(2, 3, 64, 64)))).shape == (2, 64, 64)

    def test_threshold_is_strict(self, toy_segmenter, rng):
        image = Tensor(rng.normal(size=(1, 3, 64, 64)))
        probs = crack_probability(toy_segmenter, image)
        threshold = float(np.median(probs))
        mask = segment(toy_segmenter, image, threshold)
        np.testing.assert_array_equal(mask.data, (probs > threshold).astype(float))
        assert segment(toy_segmenter, image, 1.0).data.sum() == 0

    @pytest.mark.parametrize("threshold", [-0.1, 1.5])
    def test_invalid_threshold(self, toy_segmenter, rng, threshold):
        with pytest.raises(ConfigurationError):
            segment(toy_segmenter, Tensor(rng.normal(size=(1, 3, 64, 64))), threshold)

    def test_wrong_size(self, toy_segmenter):
        with pytest.raises(InputSizeError):
            segment(toy_segmenter, Tensor(np.zeros((1, 3, 32, 32))))

    def test_forward_with_taps_matches_forward(self, toy_segmenter, rng):
        image = Tensor(rng.normal(size=(1, 3, 64, 64)))
        out, taps = forward_with_taps(toy_segmenter, image, ['layer2', 'aspp'])
        np.testing.assert_array_equal(out.data, toy_segmenter.forward(image).data)
        assert taps['layer2'].shape == (1, 10, 8, 8)


class TestStructureDocuments:
    @pytest.mark.parametrize("config", [classifier_preset('toy'), segmenter_preset('toy')])
    def test_round_trip(self, tmp_path, config):
        model = build_model(config)
        path = save_model_config(model, tmp_path / "model.yaml")
        assert load_model_config(path) == config

    def test_rebuilt_model_matches(self, tmp_path, toy_classifier, rng):
        path = save_model_config(toy_classifier, tmp_path / "model.yaml")
        rebuilt = build_model(load_model_config(path))
        image = Tensor(rng.normal(size=(1, 3, 32, 32)))
        np.testing.assert_array_equal(rebuilt.forward(image).data, toy_classifier.forward(image).data)

    def test_document_is_plain_yaml(self, tmp_path, toy_classifier):
        path = save_model_config(toy_classifier, tmp_path / "model.yaml")
        document = yaml.safe_load(path.read_text())
        assert document['architecture'] == 'densenet'
        assert document['input_size'] == [32, 32]

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_model_config(tmp_path / "absent.yaml")

    def test_malformed_yaml(self, tmp_path):
        path = tmp_path / "model.yaml"
        path.write_text("architecture: [unclosed")
        with pytest.raises(ConfigurationError):
            load_model_config(path)

    @pytest.mark.parametrize("document", [
        [],
        {'architecture': 'resnet'},
        {'architecture': 'densenet', 'format_version': 2},
        {'architecture': 'densenet', 'config': {'growth': 4}},
    ])
    def test_invalid_documents(self, document):
        with pytest.raises(ConfigurationError):
            config_from_document(document)

    def test_defaults_when_config_omitted(self):
        assert config_from_document({'architecture': 'densenet'}) == DenseNetConfig()

    def test_build_model_rejects_other_types(self):
        with pytest.raises(ConfigurationError):
            build_model({'architecture': 'densenet'})
