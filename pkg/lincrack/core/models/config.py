"""
Model Configuration

Configuration for the dense-connectivity classifier and the atrous
encoder-decoder segmenter, with named presets from toy to full size.
"""

from dataclasses import dataclass, field, asdict
from typing import Any, Dict, Tuple

from lincrack.constants import NUM_CLASSES
from lincrack.core.exceptions import ConfigurationError
from lincrack.utils.validation import (
    validate_choice,
    validate_non_negative_int,
    validate_positive_int,
    validate_positive_ints,
    validate_size,
)


def _validate_class_count(value: Any) -> None:
    validate_positive_int(value, 'num_classes')
    if value != NUM_CLASSES:
        raise ConfigurationError(f"num_classes must be {NUM_CLASSES} (background, crack), got {value}")


def _validate_compression(value: Any) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0 < value <= 1:
        raise ConfigurationError(f"compression must be in (0, 1], got {value!r}")


@dataclass
class DenseNetConfig:
    """Configuration of the dense-connectivity image classifier.

    The defaults are the DenseNet-169 layout: growth 32, blocks 6/12/32/32,
    64 initial channels, compression 0.5, bottleneck width 4·growth.

    Args:
        growth_rate: Channels added by each dense layer
        block_sizes: Layers per dense block (four blocks)
        init_channels: Channels produced by the 7×7 stem convolution
        compression: Channel factor applied by every transition
        bn_size: Bottleneck width multiplier; 0 disables the 1×1 bottleneck
        num_classes: Output logits (background, crack)
        input_size: (height, width) the classifier consumes
        seed: Seed for parameter initialization

    Raises:
        ConfigurationError: If any parameter is outside its valid range
    """
    growth_rate: int = 32
    block_sizes: Tuple[int, ...] = (6, 12, 32, 32)
    init_channels: int = 64
    compression: float = 0.5
    bn_size: int = 4
    num_classes: int = NUM_CLASSES
    input_size: Tuple[int, int] = (224, 224)
    seed: int = 42

    def __post_init__(self):
        validate_positive_int(self.growth_rate, 'growth_rate')
        self.block_sizes = validate_positive_ints(self.block_sizes, 'block_sizes')
        validate_positive_int(self.init_channels, 'init_channels')
        _validate_compression(self.compression)
        validate_non_negative_int(self.bn_size, 'bn_size')
        _validate_class_count(self.num_classes)
        self.input_size = validate_size(self.input_size, 'input_size')
        validate_non_negative_int(self.seed, 'seed')

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['block_sizes'] = list(self.block_sizes)
        data['input_size'] = list(self.input_size)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DenseNetConfig':
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigurationError(f"unknown DenseNetConfig keys: {unknown}")
        return cls(**known)


@dataclass
class SegmenterConfig:
    """Configuration of the atrous encoder-decoder segmenter.

    The encoder is dense-style: a stem at stride 4 followed by four dense
    stages (layer1..layer4). Transitions halve the resolution until the
    output stride is reached; later stages use dilated 3×3 convolutions
    instead.

    Args:
        in_channels: Image channels
        stem_channels: Channels of the stem convolution
        growth_rate: Dense-layer growth rate inside the encoder
        block_sizes: Dense layers in layer1..layer4
        compression: Transition channel factor
        bn_size: Bottleneck width multiplier of dense layers (0 disables)
        output_stride: Encoder output stride, 8 or 16
        aspp_rates: Dilation rates of the atrous ASPP branches
        aspp_channels: Channels of every ASPP branch and of its projection
        low_level_channels: Projected channels of the low-level decoder input
        decoder_channels: Channels of the two decoder 3×3 convolutions
        separable: Use depthwise + pointwise 3×3 convolutions in ASPP/decoder
        num_classes: Output channels (background, crack)
        input_size: (height, width) the segmenter consumes
        seed: Seed for parameter initialization

    Raises:
        ConfigurationError: If any parameter is outside its valid range
    """
    in_channels: int = 3
    stem_channels: int = 32
    growth_rate: int = 16
    block_sizes: Tuple[int, ...] = (3, 6, 12, 8)
    compression: float = 0.5
    bn_size: int = 4
    output_stride: int = 16
    aspp_rates: Tuple[int, ...] = (6, 12, 18)
    aspp_channels: int = 256
    low_level_channels: int = 48
    decoder_channels: int = 256
    separable: bool = True
    num_classes: int = NUM_CLASSES
    input_size: Tuple[int, int] = (384, 512)
    seed: int = 42

    def __post_init__(self):
        for name in ('in_channels', 'stem_channels', 'growth_rate', 'aspp_channels',
                     'low_level_channels', 'decoder_channels'):
            validate_positive_int(getattr(self, name), name)
        self.block_sizes = validate_positive_ints(self.block_sizes, 'block_sizes')
        if len(self.block_sizes) != 4:
            raise ConfigurationError(f"block_sizes must list 4 stages, got {self.block_sizes}")
        _validate_compression(self.compression)
        validate_non_negative_int(self.bn_size, 'bn_size')
        validate_choice(self.output_stride, 'output_stride', (8, 16))
        self.aspp_rates = validate_positive_ints(self.aspp_rates, 'aspp_rates')
        if len(set(self.aspp_rates)) != len(self.aspp_rates):
            raise ConfigurationError(f"aspp_rates must be distinct, got {self.aspp_rates}")
        if not isinstance(self.separable, bool):
            raise ConfigurationError(f"separable must be a boolean, got {self.separable!r}")
        _validate_class_count(self.num_classes)
        self.input_size = validate_size(self.input_size, 'input_size')
        for extent in self.input_size:
            if extent % self.output_stride:
                raise ConfigurationError(
                    f"input_size {self.input_size} must be a multiple of output_stride {self.output_stride}"
                )
        validate_non_negative_int(self.seed, 'seed')

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        for key in ('block_sizes', 'aspp_rates', 'input_size'):
            data[key] = list(getattr(self, key))
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SegmenterConfig':
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigurationError(f"unknown SegmenterConfig keys: {unknown}")
        return cls(**known)


CLASSIFIER_PRESETS: Dict[str, Dict[str, Any]] = {
    'densenet121': {'block_sizes': (6, 12, 24, 16)},
    'densenet169': {'block_sizes': (6, 12, 32, 32)},
    'densenet201': {'block_sizes': (6, 12, 48, 32)},
    'toy': {'growth_rate': 4, 'block_sizes': (2, 2, 2, 2), 'init_channels': 8,
            'input_size': (32, 32)},
}

SEGMENTER_PRESETS: Dict[str, Dict[str, Any]] = {
    'default': {},
    'toy': {'stem_channels': 8, 'growth_rate': 4, 'block_sizes': (1, 1, 1, 1),
            'aspp_rates': (1, 2, 3), 'aspp_channels': 16, 'low_level_channels': 8,
            'decoder_channels': 16, 'input_size': (64, 64)},
}


def classifier_preset(name: str, **overrides: Any) -> DenseNetConfig:
    """Build a DenseNetConfig from a named preset plus overrides."""
    validate_choice(name, 'classifier preset', tuple(CLASSIFIER_PRESETS))
    return DenseNetConfig(**{**CLASSIFIER_PRESETS[name], **overrides})


def segmenter_preset(name: str, **overrides: Any) -> SegmenterConfig:
    """Build a SegmenterConfig from a named preset plus overrides."""
    validate_choice(name, 'segmenter preset', tuple(SEGMENTER_PRESETS))
    return SegmenterConfig(**{**SEGMENTER_PRESETS[name], **overrides})
