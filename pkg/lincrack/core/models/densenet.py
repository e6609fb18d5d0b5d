"""
Dense-Connectivity Builders

Dense layers, dense blocks, transitions, the shared 7×7 stem and the
crack/background image classifier assembled from them.
"""

import math

from lincrack.core.exceptions import ConfigurationError
from lincrack.core.models.config import DenseNetConfig
from lincrack.core.models.graph import ModelGraph, Subgraph
from lincrack.utils.logger import get_logger
from lincrack.utils.validation import validate_non_negative_int, validate_positive_int

logger = get_logger(__name__)


def build_stem(in_channels: int, out_channels: int, name: str = "stem", source: str = "input") -> Subgraph:
    """7×7 stride-2 convolution, bn, relu and a 3×3 stride-2 max pool (stride 4 overall)."""
    stem = Subgraph(name, 'stem', source, in_channels)
    out = stem.conv('conv', source, out_channels, 7, stride=2, padding=3)
    out = stem.bn('bn', out)
    out = stem.relu('relu', out)
    stem.max_pool('pool', out, window=3, stride=2, padding=1)
    return stem


def build_dense_layer(
    in_channels: int,
    growth_rate: int,
    bn_size: int = 4,
    dilation: int = 1,
    name: str = "denselayer",
    source: str = "input",
) -> Subgraph:
    """
    One dense layer producing ``growth_rate`` channels.

    Bottleneck form: bn, relu, 1×1 conv to bn_size·growth, bn, relu, 3×3 conv.
    With ``bn_size == 0`` the 1×1 bottleneck is skipped.
    """
    layer = Subgraph(name, 'dense-layer', source, in_channels)
    out = layer.bn('norm1', source)
    out = layer.relu('relu1', out)
    if bn_size:
        out = layer.conv('conv1', out, bn_size * growth_rate, 1)
        out = layer.bn('norm2', out)
        out = layer.relu('relu2', out)
    layer.conv('conv2', out, growth_rate, 3, padding=dilation, dilation=dilation)
    return layer


def build_dense_block(
    in_channels: int,
    num_layers: int,
    growth_rate: int,
    *,
    name: str = "denseblock",
    source: str = "input",
    bn_size: int = 4,
    dilation: int = 1,
) -> Subgraph:
    """
    Build a dense block.

    Layer i consumes the concatenation of the block input and the outputs of
    layers 1..i-1, so the block emits ``in_channels + num_layers * growth_rate``
    channels. Zero layers give the identity.

    Args:
        in_channels: Channels of the block input
        num_layers: Dense layers in the block
        growth_rate: Channels each layer adds
        name: Prefix of every layer name in the block
        source: Name of the layer feeding the block
        bn_size: Bottleneck width multiplier (0 disables the bottleneck)
        dilation: Dilation of the 3×3 convolutions

    Returns:
        Subgraph whose ``layer_inputs`` info lists each layer's input channels
    """
    validate_positive_int(in_channels, 'in_channels')
    validate_non_negative_int(num_layers, 'num_layers')
    validate_positive_int(growth_rate, 'growth_rate')

    block = Subgraph(name, 'dense-block', source, in_channels)
    features = [source]
    layer_inputs = []
    for i in range(1, num_layers + 1):
        layer_input = features[0] if len(features) == 1 else block.concat(f"concat{i}", features)
        layer_inputs.append(block.channels[layer_input])
        layer = build_dense_layer(
            block.channels[layer_input], growth_rate, bn_size=bn_size, dilation=dilation,
            name=f"{name}.denselayer{i}", source=layer_input,
        )
        features.append(block.include(layer))
    if num_layers:
        block.concat('output', features)
    block.info['layer_inputs'] = layer_inputs
    return block


def transition_channels(in_channels: int, compression: float) -> int:
    channels = math.floor(in_channels * compression)
    if channels < 1:
        raise ConfigurationError(f"compression {compression} leaves no channels from {in_channels}")
    return channels


def build_transition(
    in_channels: int,
    compression: float,
    *,
    name: str = "transition",
    source: str = "input",
    pool: bool = True,
) -> Subgraph:
    """bn, relu, 1×1 conv to floor(in·compression) channels, 2×2 average pool stride 2.

    ``pool=False`` keeps the resolution; the segmenter uses it past its output stride.
    """
    if isinstance(compression, bool) or not isinstance(compression, (int, float)) or not 0 < compression <= 1:
        raise ConfigurationError(f"compression must be in (0, 1], got {compression!r}")
    transition = Subgraph(name, 'transition', source, in_channels)
    out = transition.bn('norm', source)
    out = transition.relu('relu', out)
    out = transition.conv('conv', out, transition_channels(in_channels, compression), 1)
    if pool:
        transition.avg_pool('pool', out, window=2, stride=2)
    return transition


def build_classifier(config: DenseNetConfig) -> ModelGraph:
    """
    Build the crack/background image classifier.

    stem → [dense block, transition] × (n-1) → dense block → bn → relu →
    global average pool → linear to two logits.
    """
    graph = Subgraph("", 'model', 'input', 3)
    graph.add_input('input')
    out = graph.include(build_stem(3, config.init_channels, source='input'))
    taps = {'stem': out}

    for index, num_layers in enumerate(config.block_sizes, start=1):
        block = build_dense_block(
            graph.channels[out], num_layers, config.growth_rate,
            name=f"denseblock{index}", source=out, bn_size=config.bn_size,
        )
        out = graph.include(block)
        taps[f"denseblock{index}"] = out
        if index < len(config.block_sizes):
            out = graph.include(build_transition(
                graph.channels[out], config.compression, name=f"transition{index}", source=out,
            ))
            taps[f"transition{index}"] = out

    out = graph.bn('norm5', out)
    out = graph.relu('relu5', out)
    taps['features'] = out
    out = graph.global_pool('pool', out)
    out = graph.flatten('flatten', out)
    out = graph.linear('classifier', out, config.num_classes)
    taps['logits'] = out

    metadata = {
        'architecture': 'densenet',
        'config': config.to_dict(),
        'input_size': list(config.input_size),
        'in_channels': 3,
        'num_classes': config.num_classes,
        'taps': taps,
    }
    model = ModelGraph.from_subgraph(graph, metadata, config.seed)
    logger.debug(f"Built classifier: {len(model.layers)} layers, {model.num_parameters()} parameters")
    return model
