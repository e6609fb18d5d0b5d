"""
lincrack - Tunnel Lining Crack Inspection

A two-stage crack inspection engine: an image classifier selects crack
images, a semantic segmenter extracts crack pixels, and Score-CAM heatmaps
show what the segmenter attends to. Everything runs on a small numpy tensor
core with reverse-mode differentiation.
"""

__version__ = "0.3.0"
__author__ = "lincrack Team"
__license__ = "Apache-2.0"

# Common exceptions first to avoid circular imports
from lincrack.core.exceptions import (
    LinCrackError,
    ConfigurationError,
    TensorError,
    ModelError,
    DataError,
    PipelineError,
)

from lincrack.core.tensor import Tensor, no_grad
from lincrack.core.models import (
    DenseNetConfig,
    SegmenterConfig,
    ModelGraph,
    build_classifier,
    build_segmenter,
    classify,
    segment,
    forward_with_taps,
)

__all__ = [
    'Tensor',
    'no_grad',
    'DenseNetConfig',
    'SegmenterConfig',
    'ModelGraph',
    'build_classifier',
    'build_segmenter',
    'classify',
    'segment',
    'forward_with_taps',
    'LinCrackError',
    'ConfigurationError',
    'TensorError',
    'ModelError',
    'DataError',
    'PipelineError',
    '__version__',
]
