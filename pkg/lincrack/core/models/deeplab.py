"""
Atrous Encoder-Decoder Builders

ASPP, the low/high-level decoder and the crack segmenter: a dense-style
encoder at output stride 16 (or 8), atrous spatial pyramid pooling, and a
decoder that fuses upsampled ASPP features with projected low-level features.
"""

from typing import Sequence

from lincrack.core.exceptions import ConfigurationError
from lincrack.core.models.config import SegmenterConfig
from lincrack.core.models.densenet import build_dense_block, build_stem, build_transition
from lincrack.core.models.graph import ModelGraph, Subgraph
from lincrack.utils.logger import get_logger
from lincrack.utils.validation import validate_positive_int, validate_positive_ints

logger = get_logger(__name__)

# Encoder stages and the tap each exposes
ENCODER_TAPS = ('layer1', 'layer2', 'layer3', 'layer4')
SEGMENTER_TAPS = ENCODER_TAPS + ('aspp', 'low_level', 'high_level', 'decoder', 'decoder_output', 'logits')


def _atrous_unit(graph: Subgraph, local: str, source: str, out_channels: int, rate: int, separable: bool) -> str:
    if separable:
        return graph.separable_conv_bn_relu(local, source, out_channels, dilation=rate)
    return graph.conv_bn_relu(local, source, out_channels, 3, padding=rate, dilation=rate)


def build_aspp(
    in_channels: int,
    rates: Sequence[int],
    out_channels: int,
    *,
    name: str = "aspp",
    source: str = "input",
    separable: bool = False,
) -> Subgraph:
    """
    Atrous spatial pyramid pooling.

    Parallel branches: a 1×1 conv, one 3×3 atrous conv per rate, and image
    pooling (global average pool, 1×1 conv, resize back). Every branch emits
    ``out_channels``; the concatenation is projected to ``out_channels`` by a
    1×1 conv. All branches keep the input's spatial size.

    Raises:
        ConfigurationError: If rates are empty, non-positive or repeated
    """
    validate_positive_int(in_channels, 'in_channels')
    validate_positive_int(out_channels, 'out_channels')
    rates = validate_positive_ints(rates, 'rates')
    if len(set(rates)) != len(rates):
        raise ConfigurationError(f"ASPP rates must be distinct, got {rates}")

    aspp = Subgraph(name, 'aspp', source, in_channels)
    branches = [aspp.conv_bn_relu('branch0', source, out_channels, 1)]
    for index, rate in enumerate(rates, start=1):
        branches.append(_atrous_unit(aspp, f"branch{index}", source, out_channels, rate, separable))

    pooled = aspp.global_pool('image_pool.pool', source)
    pooled = aspp.conv('image_pool.conv', pooled, out_channels, 1, bias=True)
    pooled = aspp.relu('image_pool.relu', pooled)
    branches.append(aspp.resize('image_pool.resize', pooled, size_of=source))

    merged = aspp.concat('concat', branches)
    aspp.conv_bn_relu('project', merged, out_channels, 1)
    aspp.info['branches'] = len(branches)
    aspp.info['concat_channels'] = aspp.channels[merged]
    return aspp


def build_decoder(
    high_channels: int,
    low_channels: int,
    *,
    high_source: str,
    low_source: str,
    low_level_channels: int = 48,
    decoder_channels: int = 256,
    num_classes: int = 2,
    separable: bool = False,
    name: str = "decoder",
) -> Subgraph:
    """
    Fuse high-level (ASPP) and low-level encoder features.

    The low-level features are projected by a 1×1 conv; the high-level
    features are bilinearly upsampled to the low-level resolution (4× at
    output stride 16). After concatenation, two 3×3 convs and a 1×1 conv
    produce ``num_classes`` channels.

    Returns:
        Subgraph with ``low_level``, ``high_level``, ``decoder`` and
        ``decoder_output`` entries in ``info['taps']``
    """
    decoder = Subgraph(name, 'decoder', high_source, high_channels)
    decoder.channels[low_source] = low_channels

    low = decoder.conv_bn_relu('low_level', low_source, low_level_channels, 1)
    high = decoder.resize('high_level', high_source, size_of=low)
    out = decoder.concat('concat', [high, low])
    for index in (1, 2):
        out = _atrous_unit(decoder, f"conv{index}", out, decoder_channels, 1, separable)
    fused = out
    decoder.conv('classifier', out, num_classes, 1, bias=True)
    decoder.info['taps'] = {
        'low_level': low,
        'high_level': high,
        'decoder': fused,
        'decoder_output': decoder.output,
    }
    return decoder


def build_segmenter(config: SegmenterConfig) -> ModelGraph:
    """
    Build the crack segmenter.

    Encoder: stem (stride 4) → layer1 (low-level source) → layer2 (stride 8)
    → layer3 (stride 16, or dilated at output stride 8) → layer4 (dilated).
    Then ASPP, the decoder and a bilinear upsample of the two-channel map to
    the input size.
    """
    graph = Subgraph("", 'model', 'input', config.in_channels)
    graph.add_input('input')
    out = graph.include(build_stem(config.in_channels, config.stem_channels, source='input'))

    # (pool before the stage, dilation inside the stage)
    if config.output_stride == 16:
        stages = [(None, 1), (True, 1), (True, 1), (False, 2)]
    else:
        stages = [(None, 1), (True, 1), (False, 2), (False, 4)]

    taps = {}
    for index, ((pool, dilation), num_layers) in enumerate(zip(stages, config.block_sizes), start=1):
        stage = f"layer{index}"
        if pool is not None:
            out = graph.include(build_transition(
                graph.channels[out], config.compression, name=f"{stage}.transition", source=out, pool=pool,
            ))
        out = graph.include(build_dense_block(
            graph.channels[out], num_layers, config.growth_rate, name=f"{stage}.block",
            source=out, bn_size=config.bn_size, dilation=dilation,
        ))
        taps[stage] = out

    aspp = build_aspp(graph.channels[out], config.aspp_rates, config.aspp_channels,
                      source=out, separable=config.separable)
    taps['aspp'] = graph.include(aspp)

    decoder = build_decoder(
        graph.channels[taps['aspp']], graph.channels[taps['layer1']],
        high_source=taps['aspp'], low_source=taps['layer1'],
        low_level_channels=config.low_level_channels, decoder_channels=config.decoder_channels,
        num_classes=config.num_classes, separable=config.separable,
    )
    graph.include(decoder)
    taps.update(decoder.info['taps'])
    taps['logits'] = graph.resize('logits', decoder.output, size_of='input')

    metadata = {
        'architecture': 'deeplab',
        'config': config.to_dict(),
        'input_size': list(config.input_size),
        'in_channels': config.in_channels,
        'num_classes': config.num_classes,
        'output_stride': config.output_stride,
        'taps': taps,
    }
    model = ModelGraph.from_subgraph(graph, metadata, config.seed)
    logger.debug(f"Built segmenter: {len(model.layers)} layers, {model.num_parameters()} parameters")
    return model
