"""
lincrack tensor core

Dense float64 tensors with reverse-mode differentiation and the numeric
operations the classifier and segmenter are built from.
"""

from .tensor import (
    Tensor,
    Function,
    no_grad,
    debug_mode,
    is_debug_mode,
    check_finite,
    as_tensor,
    DEFAULT_DTYPE,
)
from .params import ConvParams, output_extent
from .functional import (
    conv2d,
    batch_norm,
    relu,
    max_pool,
    avg_pool,
    avg_pool_global,
    bilinear_resize,
    concat,
    flatten,
    add,
    mul,
    tensor_sum,
    linear,
    softmax,
    cross_entropy_loss,
    DEFAULT_BN_EPS,
    DEFAULT_BN_MOMENTUM,
)
from .gradcheck import gradcheck, numerical_gradient, relative_error
from .optim import SGD

__all__ = [
    'Tensor',
    'Function',
    'no_grad',
    'debug_mode',
    'is_debug_mode',
    'check_finite',
    'as_tensor',
    'DEFAULT_DTYPE',
    'ConvParams',
    'output_extent',
    'conv2d',
    'batch_norm',
    'relu',
    'max_pool',
    'avg_pool',
    'avg_pool_global',
    'bilinear_resize',
    'concat',
    'flatten',
    'add',
    'mul',
    'tensor_sum',
    'linear',
    'softmax',
    'cross_entropy_loss',
    'DEFAULT_BN_EPS',
    'DEFAULT_BN_MOMENTUM',
    'gradcheck',
    'numerical_gradient',
    'relative_error',
    'SGD',
]
