"""
lincrack models

Declarative builders and forward evaluation for the crack classifier and
the crack segmenter.
"""

from .config import (
    DenseNetConfig,
    SegmenterConfig,
    CLASSIFIER_PRESETS,
    SEGMENTER_PRESETS,
    classifier_preset,
    segmenter_preset,
)
from .graph import LayerSpec, ParamSpec, Subgraph, ModelGraph, initialize_parameters
from .densenet import (
    build_stem,
    build_dense_layer,
    build_dense_block,
    build_transition,
    build_classifier,
    transition_channels,
)
from .deeplab import build_aspp, build_decoder, build_segmenter, ENCODER_TAPS, SEGMENTER_TAPS
from .inference import (
    ClassificationResult,
    classify,
    classify_batch,
    crack_probability,
    decide_label,
    segment,
    forward_with_taps,
    save_model_config,
    load_model_config,
    config_from_document,
    build_model,
)

__all__ = [
    'DenseNetConfig',
    'SegmenterConfig',
    'CLASSIFIER_PRESETS',
    'SEGMENTER_PRESETS',
    'classifier_preset',
    'segmenter_preset',
    'LayerSpec',
    'ParamSpec',
    'Subgraph',
    'ModelGraph',
    'initialize_parameters',
    'build_stem',
    'build_dense_layer',
    'build_dense_block',
    'build_transition',
    'build_classifier',
    'transition_channels',
    'build_aspp',
    'build_decoder',
    'build_segmenter',
    'ENCODER_TAPS',
    'SEGMENTER_TAPS',
    'ClassificationResult',
    'classify',
    'classify_batch',
    'crack_probability',
    'decide_label',
    'segment',
    'forward_with_taps',
    'save_model_config',
    'load_model_config',
    'config_from_document',
    'build_model',
]
