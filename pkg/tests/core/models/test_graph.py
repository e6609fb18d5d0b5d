"""
Tests for subgraph assembly and ModelGraph evaluation and state.
"""

import numpy as np
import pytest

from lincrack.core.exceptions import InputSizeError, ModelError, ShapeMismatchError, UnknownTapError
from lincrack.core.models import LayerSpec, ModelGraph, Subgraph, build_classifier, classifier_preset
from lincrack.core.tensor import Tensor


class TestSubgraph:
    def test_unknown_block_kind(self):
        with pytest.raises(ModelError):
            Subgraph("block", 'bottleneck', 'x', 4)

    def test_unknown_input(self):
        graph = Subgraph("block", 'dense-block', 'x', 4)
        with pytest.raises(ModelError):
            graph.relu('relu', 'missing')

    def test_names_are_prefixed(self):
        graph = Subgraph("block", 'dense-block', 'x', 4)
        assert graph.relu('relu', 'x') == 'block.relu'
        assert graph.out_channels == 4

    def test_include_needs_produced_source(self):
        graph = Subgraph("", 'model', 'input', 3)
        with pytest.raises(ModelError):
            graph.include(Subgraph("other", 'stem', 'elsewhere', 3))

    def test_resize_reference_must_exist(self):
        graph = Subgraph("", 'model', 'input', 3)
        with pytest.raises(ModelError):
            graph.resize('up', 'input', size_of='later')

    def test_concat_channels(self):
        graph = Subgraph("", 'model', 'input', 3)
        a = graph.conv('a', 'input', 5, 1)
        graph.concat('cat', ['input', a])
        assert graph.out_channels == 8


class TestModelGraphValidation:
    def test_layer_read_before_produced(self):
        layers = [LayerSpec('input', 'input'), LayerSpec('b', 'relu', ('a',)), LayerSpec('a', 'relu', ('input',))]
        with pytest.raises(ModelError):
            ModelGraph(layers, {}, {}, {'input_size': [4, 4], 'num_classes': 2, 'output': 'a'})

    def test_duplicate_names(self):
        layers = [LayerSpec('input', 'input'), LayerSpec('a', 'relu', ('input',)), LayerSpec('a', 'relu', ('input',))]
        with pytest.raises(ModelError):
            ModelGraph(layers, {}, {}, {'input_size': [4, 4], 'num_classes': 2, 'output': 'a'})

    def test_unknown_kind(self):
        layers = [LayerSpec('input', 'input'), LayerSpec('a', 'softplus', ('input',))]
        with pytest.raises(ModelError):
            ModelGraph(layers, {}, {}, {'input_size': [4, 4], 'num_classes': 2, 'output': 'a'})

    def test_tap_to_missing_layer(self):
        layers = [LayerSpec('input', 'input'), LayerSpec('a', 'relu', ('input',))]
        with pytest.raises(ModelError):
            ModelGraph(layers, {}, {}, {'input_size': [4, 4], 'num_classes': 2, 'output': 'a',
                                        'taps': {'features': 'b'}})


class TestModelGraph:
    def test_layer_order_starts_with_input(self, toy_classifier):
        assert toy_classifier.layer_names[0] == 'input'
        assert toy_classifier.layer_names[-1] == 'classifier'

    def test_resolve_tap(self, toy_classifier):
        assert toy_classifier.resolve_tap('features') == 'relu5'
        assert toy_classifier.resolve_tap('relu5') == 'relu5'
        with pytest.raises(UnknownTapError):
            toy_classifier.resolve_tap('denseblock9')

    def test_unknown_tap_is_a_key_error(self, toy_classifier):
        with pytest.raises(KeyError):
            toy_classifier.layer('nope')

    @pytest.mark.parametrize("shape", [(3, 32, 32), (1, 1, 32, 32), (1, 3, 32, 31)])
    def test_input_shape_checked(self, toy_classifier, shape):
        with pytest.raises(InputSizeError):
            toy_classifier.forward(Tensor(np.zeros(shape)))

    def test_forward_is_deterministic(self, toy_classifier, rng):
        image = Tensor(rng.normal(size=(2, 3, 32, 32)))
        np.testing.assert_array_equal(toy_classifier.forward(image).data, toy_classifier.forward(image).data)

    def test_taps_do_not_change_output(self, toy_classifier, rng):
        image = Tensor(rng.normal(size=(1, 3, 32, 32)))
        out, taps = toy_classifier.run(image, taps=['stem', 'denseblock2', 'features'])
        np.testing.assert_array_equal(out.data, toy_classifier.forward(image).data)
        assert set(taps) == {'stem', 'denseblock2', 'features'}

    def test_training_mode_updates_running_stats(self, toy_classifier, rng):
        before = toy_classifier.buffers['stem.bn.running_mean'].data.copy()
        toy_classifier.run(Tensor(rng.normal(size=(2, 3, 32, 32))), training=True)
        assert not np.array_equal(before, toy_classifier.buffers['stem.bn.running_mean'].data)

    def test_eval_mode_keeps_running_stats(self, toy_classifier, rng):
        before = toy_classifier.state_dict()
        toy_classifier.forward(Tensor(rng.normal(size=(2, 3, 32, 32))))
        after = toy_classifier.state_dict()
        for name in before:
            np.testing.assert_array_equal(before[name], after[name])

    def test_describe(self, toy_classifier):
        summary = toy_classifier.describe()
        assert summary['num_parameters'] == toy_classifier.num_parameters() > 0
        assert len(summary['layers']) == len(toy_classifier.layers)


class TestState:
    def test_state_dict_round_trip(self, rng):
        source = build_classifier(classifier_preset('toy', seed=1))
        target = build_classifier(classifier_preset('toy', seed=2))
        image = Tensor(rng.normal(size=(1, 3, 32, 32)))
        target.load_state_dict(source.state_dict())
        np.testing.assert_array_equal(target.forward(image).data, source.forward(image).data)

    def test_state_dict_is_a_copy(self, toy_classifier):
        state = toy_classifier.state_dict()
        state['classifier.bias'][:] = 7.0
        assert not np.any(toy_classifier.parameters['classifier.bias'].data == 7.0)

    def test_state_includes_buffers(self, toy_classifier):
        state = toy_classifier.state_dict()
        assert 'stem.bn.running_var' in state
        assert len(state) == len(toy_classifier.parameters) + len(toy_classifier.buffers)

    def test_missing_entry_strict(self, toy_classifier):
        state = toy_classifier.state_dict()
        del state['classifier.bias']
        with pytest.raises(ShapeMismatchError):
            toy_classifier.load_state_dict(state)

    def test_missing_entry_lenient(self, toy_classifier):
        toy_classifier.load_state_dict({'classifier.bias': np.array([1.0, -1.0])}, strict=False)
        np.testing.assert_array_equal(toy_classifier.parameters['classifier.bias'].data, [1.0, -1.0])

    def test_wrong_shape(self, toy_classifier):
        state = toy_classifier.state_dict()
        state['classifier.bias'] = np.zeros(3)
        with pytest.raises(ShapeMismatchError):
            toy_classifier.load_state_dict(state)
