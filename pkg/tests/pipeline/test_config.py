"""
Tests for the pipeline configuration.
"""

from pathlib import Path

import pytest
import yaml

from lincrack.core.exceptions import ConfigurationError, MissingWeightsError
from lincrack.core.models import DenseNetConfig, classifier_preset, save_model_config
from lincrack.data import save_weights
from lincrack.pipeline import PipelineConfig, ScoreCamSettings, StageConfig, TrainingConfig


class TestDefaults:
    def test_stages(self):
        config = PipelineConfig()
        assert config.classifier.preset == 'densenet169'
        assert config.classifier.input_size == (224, 224)
        assert config.segmenter.input_size == (384, 512)
        assert not config.scorecam.enabled
        assert config.seg_threshold == 0.5
        assert config.detection_threshold == 0.5

    def test_training(self):
        config = PipelineConfig()
        assert (config.train_classifier.batch_size, config.train_classifier.schedule,
                config.train_classifier.base_lr) == (4, 'step', 0.005)
        assert (config.train_segmenter.batch_size, config.train_segmenter.schedule,
                config.train_segmenter.base_lr) == (8, 'two_phase', 0.001)
        assert config.train_classifier.epochs == config.train_segmenter.epochs == 100

    def test_learning_rate_follows_schedule(self):
        config = PipelineConfig()
        assert config.train_classifier.learning_rate(10) == pytest.approx(0.0005)
        assert config.train_segmenter.learning_rate(50) == 0.0001


class TestSerialization:
    def test_round_trip(self):
        config = PipelineConfig(seg_threshold=0.3, workers=2,
                                scorecam=ScoreCamSettings(enabled=True, taps=('layer1', 'aspp')))
        assert PipelineConfig.from_dict(config.to_dict()) == config

    def test_save_and_load(self, tmp_path):
        config = PipelineConfig(output_dir=str(tmp_path / "runs"),
                                classifier=StageConfig('densenet', 'toy', input_size=(32, 32)))
        path = config.save(tmp_path / "pipeline.yaml")
        assert yaml.safe_load(path.read_text())['classifier']['preset'] == 'toy'
        assert PipelineConfig.load(path) == config

    def test_partial_document(self):
        config = PipelineConfig.from_dict({'segmenter': {'preset': 'toy', 'input_size': [64, 64]},
                                           'training': {'segmenter': {'epochs': 3}}})
        assert config.segmenter.preset == 'toy'
        assert config.segmenter.architecture == 'deeplab'
        assert config.train_segmenter.epochs == 3
        assert config.train_segmenter.schedule == 'two_phase'

    def test_overrides(self):
        config = PipelineConfig.load(overrides=['seg_threshold=0.7', 'classifier.preset=toy',
                                                'training.classifier.epochs=3', 'scorecam.taps=[layer1]'])
        assert config.seg_threshold == 0.7
        assert config.classifier.preset == 'toy'
        assert config.train_classifier.epochs == 3
        assert config.scorecam.taps == ('layer1',)

    @pytest.mark.parametrize("data", [
        {'thresholds': 1},
        {'classifier': {'depth': 3}},
        {'training': {'detector': {}}},
        {'training': {'classifier': {'lr': 0.1}}},
        {'scorecam': {'colormap': 'jet'}},
    ])
    def test_unknown_keys(self, data):
        with pytest.raises(ConfigurationError):
            PipelineConfig.from_dict(data)

    @pytest.mark.parametrize("overrides", [['seg_threshold=1.5'], ['workers=0'], ['noequals'],
                                           ['classifier.architecture=deeplab'], ['segmenter.preset=huge']])
    def test_invalid_overrides(self, overrides):
        with pytest.raises(ConfigurationError):
            PipelineConfig.load(overrides=overrides)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            PipelineConfig.load(tmp_path / "absent.yaml")


class TestSections:
    @pytest.mark.parametrize("kwargs", [
        {'reduction': 'region'}, {'taps': 'layer1'}, {'class_index': 2}, {'alpha': 2.0}, {'enabled': 'yes'},
    ])
    def test_invalid_scorecam(self, kwargs):
        with pytest.raises(ConfigurationError):
            ScoreCamSettings(**kwargs)

    @pytest.mark.parametrize("kwargs", [
        {'epochs': 0}, {'schedule': 'cosine'}, {'momentum': 1.0}, {'base_lr': 0}, {'target_train_metric': 2},
    ])
    def test_invalid_training(self, kwargs):
        with pytest.raises(ConfigurationError):
            TrainingConfig(**kwargs)

    def test_stage_preset_must_match_architecture(self):
        with pytest.raises(ConfigurationError):
            StageConfig('densenet', 'default')


class TestStageBuild:
    def test_missing_weights(self, tmp_path):
        stage = StageConfig('densenet', 'toy', weights=str(tmp_path / "absent.nwb"), input_size=(32, 32))
        with pytest.raises(MissingWeightsError):
            stage.build()

    def test_untrained_build(self):
        model = StageConfig('densenet', 'toy', input_size=(32, 32)).build(require_weights=False)
        assert model.input_size == (32, 32)

    def test_input_size_overrides_preset(self):
        config = StageConfig('densenet', 'toy', input_size=(48, 48)).model_config()
        assert config.input_size == (48, 48)
        assert config.growth_rate == 4

    def test_structure_document_wins(self, tmp_path, toy_classifier):
        weights = save_weights(toy_classifier, tmp_path / "classifier.nwb")
        save_model_config(toy_classifier, tmp_path / "classifier.yaml")
        stage = StageConfig('densenet', 'densenet169', weights=str(weights))
        assert stage.model_config() == classifier_preset('toy')
        model = stage.build()
        assert model.state_dict().keys() == toy_classifier.state_dict().keys()
        assert isinstance(stage.model_config(), DenseNetConfig)


def test_shipped_toy_config_loads():
    path = Path(__file__).resolve().parents[2] / "configs" / "toy.yaml"
    config = PipelineConfig.load(path)
    assert config.classifier.preset == 'toy'
    assert config.segmenter.model_config().input_size == (64, 64)
    assert config.scorecam.taps == ('layer4', 'aspp', 'decoder_output')
