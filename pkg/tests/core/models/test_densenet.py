"""
Tests for dense blocks, transitions and the classifier.
"""

import numpy as np
import pytest

from lincrack.core.exceptions import ConfigurationError, InputSizeError
from lincrack.core.models import (
    DenseNetConfig,
    ModelGraph,
    Subgraph,
    build_classifier,
    build_dense_block,
    build_transition,
    classifier_preset,
)
from lincrack.core.models.densenet import transition_channels
from lincrack.core.tensor import Tensor


def standalone(block: Subgraph, channels: int, size=(8, 8)) -> ModelGraph:
    graph = Subgraph("", 'model', 'input', channels)
    graph.add_input('input')
    graph.include(block)
    metadata = {'input_size': list(size), 'in_channels': channels, 'num_classes': 2, 'taps': {}}
    return ModelGraph.from_subgraph(graph, metadata, seed=0)


class TestDenseBlock:
    @pytest.mark.parametrize("in_channels,layers,growth", [(3, 4, 5), (16, 2, 4), (64, 6, 32)])
    def test_output_channels(self, in_channels, layers, growth):
        block = build_dense_block(in_channels, layers, growth)
        assert block.out_channels == in_channels + layers * growth
        assert block.info['layer_inputs'] == [in_channels + i * growth for i in range(layers)]

    def test_zero_layers_is_identity(self, rng):
        block = build_dense_block(3, 0, 4)
        model = standalone(block, 3)
        x = rng.normal(size=(1, 3, 8, 8))
        np.testing.assert_array_equal(model.forward(Tensor(x)).data, x)

    def test_forward_shape_keeps_resolution(self, rng):
        model = standalone(build_dense_block(3, 2, 4, bn_size=2), 3)
        out = model.forward(Tensor(rng.normal(size=(2, 3, 8, 8))))
        assert out.shape == (2, 11, 8, 8)

    def test_block_input_passes_through_first(self, rng):
        """The concatenated output starts with the block input channels unchanged."""
        model = standalone(build_dense_block(3, 2, 4), 3)
        x = rng.normal(size=(1, 3, 8, 8))
        np.testing.assert_array_equal(model.forward(Tensor(x)).data[:, :3], x)

    def test_dilated_block_keeps_resolution(self, rng):
        model = standalone(build_dense_block(4, 2, 4, dilation=3), 4)
        assert model.forward(Tensor(rng.normal(size=(1, 4, 8, 8)))).shape == (1, 12, 8, 8)


class TestTransition:
    @pytest.mark.parametrize("channels,compression,expected", [(10, 0.5, 5), (11, 0.5, 5), (7, 1.0, 7)])
    def test_channels_are_floored(self, channels, compression, expected):
        assert transition_channels(channels, compression) == expected

    def test_compression_leaving_no_channels(self):
        with pytest.raises(ConfigurationError):
            transition_channels(1, 0.5)

    @pytest.mark.parametrize("compression", [0, 1.5, -0.1, True])
    def test_invalid_compression(self, compression):
        with pytest.raises(ConfigurationError):
            build_transition(8, compression)

    def test_halves_resolution(self, rng):
        model = standalone(build_transition(8, 0.5), 8, size=(9, 8))
        assert model.forward(Tensor(rng.normal(size=(1, 8, 9, 8)))).shape == (1, 4, 4, 4)

    def test_without_pool_keeps_resolution(self, rng):
        model = standalone(build_transition(8, 0.5, pool=False), 8)
        assert model.forward(Tensor(rng.normal(size=(1, 8, 8, 8)))).shape == (1, 4, 8, 8)


class TestClassifier:
    def test_logits_shape(self, toy_classifier, rng):
        out = toy_classifier.forward(Tensor(rng.normal(size=(3, 3, 32, 32))))
        assert out.shape == (3, 2)

    def test_taps_resolve(self, toy_classifier):
        for tap in ('stem', 'denseblock1', 'transition1', 'denseblock4', 'features', 'logits'):
            toy_classifier.resolve_tap(tap)
        assert 'transition4' not in toy_classifier.taps

    def test_feature_channels(self, toy_classifier, rng):
        _, taps = toy_classifier.run(Tensor(rng.normal(size=(1, 3, 32, 32))), taps=['stem', 'features'])
        assert taps['stem'].shape == (1, 8, 8, 8)
        # 8 → 16, halved by three transitions and grown again by each block
        assert taps['features'].shape == (1, 16, 1, 1)

    def test_wrong_input_size(self, toy_classifier):
        with pytest.raises(InputSizeError):
            toy_classifier.forward(Tensor(np.zeros((1, 3, 64, 64))))

    def test_same_seed_same_parameters(self):
        a = build_classifier(classifier_preset('toy'))
        b = build_classifier(classifier_preset('toy'))
        for (name, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
            np.testing.assert_array_equal(pa.data, pb.data, err_msg=name)

    def test_different_seed_different_parameters(self):
        a = build_classifier(classifier_preset('toy'))
        b = build_classifier(classifier_preset('toy', seed=1))
        assert not np.array_equal(a.parameters['stem.conv.weight'].data, b.parameters['stem.conv.weight'].data)

    def test_densenet169_layout(self):
        config = DenseNetConfig()
        assert config.block_sizes == (6, 12, 32, 32)
        assert config.growth_rate == 32
        assert config.input_size == (224, 224)

    @pytest.mark.parametrize("kwargs", [
        {'growth_rate': 0},
        {'block_sizes': ()},
        {'num_classes': 3},
        {'compression': 0},
        {'input_size': (0, 32)},
    ])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigurationError):
            DenseNetConfig(**kwargs)

    def test_config_round_trip(self):
        config = classifier_preset('toy')
        assert DenseNetConfig.from_dict(config.to_dict()) == config
