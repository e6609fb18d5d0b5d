"""
Tests for conv2d against a naive nested-loop reference.
"""

import numpy as np
import pytest

from lincrack.core.exceptions import ConfigurationError, ShapeError
from lincrack.core.tensor import ConvParams, Tensor, conv2d, output_extent


def naive_conv2d(x, w, b, stride, padding, dilation, groups):
    batch, channels, height, width = x.shape
    out_channels, group_channels, kh, kw = w.shape
    out_h = (height + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    out_w = (width + 2 * padding - dilation * (kw - 1) - 1) // stride + 1
    per_group = out_channels // groups
    out = np.zeros((batch, out_channels, out_h, out_w))
    for n in range(batch):
        for o in range(out_channels):
            g = o // per_group
            for i in range(out_h):
                for j in range(out_w):
                    acc = b[o] if b is not None else 0.0
                    for c in range(group_channels):
                        for u in range(kh):
                            for v in range(kw):
                                y = i * stride - padding + u * dilation
                                z = j * stride - padding + v * dilation
                                if 0 <= y < height and 0 <= z < width:
                                    acc += x[n, g * group_channels + c, y, z] * w[o, c, u, v]
                    out[n, o, i, j] = acc
    return out


def _random_case(seed):
    rng = np.random.default_rng(seed)
    stride = int(rng.choice([1, 2]))
    padding = int(rng.choice([0, 1, 2]))
    dilation = int(rng.choice([1, 2, 3]))
    channels = int(rng.choice([2, 4]))
    groups = int(rng.choice([1, 2, channels]))
    out_channels = groups * int(rng.integers(1, 3))
    kernel = int(rng.choice([1, 2, 3]))
    size = dilation * (kernel - 1) + 1 + int(rng.integers(0, 4))
    x = rng.normal(size=(int(rng.integers(1, 3)), channels, size, size + int(rng.integers(0, 2))))
    w = rng.normal(size=(out_channels, channels // groups, kernel, kernel))
    b = rng.normal(size=out_channels) if rng.random() < 0.5 else None
    return x, w, b, stride, padding, dilation, groups


@pytest.mark.parametrize("seed", range(200))
def test_conv2d_matches_naive_reference(seed):
    """Randomized stride/padding/dilation/groups cases agree to 1e-12."""
    x, w, b, stride, padding, dilation, groups = _random_case(seed)
    params = ConvParams(stride=stride, padding=padding, dilation=dilation, groups=groups)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b) if b is not None else None, params)
    expected = naive_conv2d(x, w, b, stride, padding, dilation, groups)
    assert out.shape == expected.shape
    np.testing.assert_allclose(out.data, expected, rtol=0, atol=1e-12)


def test_identity_kernel_returns_input():
    x = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    out = conv2d(Tensor(x), Tensor(w), params=ConvParams(padding=1))
    np.testing.assert_array_equal(out.data, x)


def test_output_extent_formula():
    assert output_extent(224, 7, 2, 3) == 112
    assert output_extent(5, 3, 1, 2, dilation=2) == 5
    assert ConvParams(stride=2, padding=1).output_size(8, 6, 3, 3) == (4, 3)


def test_conv_params_expand_scalars():
    params = ConvParams(stride=2, padding=1, dilation=3, groups=2)
    assert params.stride == (2, 2)
    assert params.padding == (1, 1)
    assert params.dilation == (3, 3)
    assert ConvParams.from_dict(params.to_dict()) == params


@pytest.mark.parametrize("kwargs", [
    {'stride': 0},
    {'padding': -1},
    {'dilation': 0},
    {'groups': 0},
    {'stride': (1, 2, 3)},
])
def test_conv_params_reject_invalid_values(kwargs):
    with pytest.raises(ConfigurationError):
        ConvParams(**kwargs)


def test_groups_must_divide_channels():
    x = Tensor(np.zeros((1, 3, 4, 4)))
    w = Tensor(np.zeros((2, 1, 1, 1)))
    with pytest.raises(ShapeError):
        conv2d(x, w, params=ConvParams(groups=2))


def test_output_below_one_pixel_raises():
    x = Tensor(np.zeros((1, 1, 2, 2)))
    w = Tensor(np.zeros((1, 1, 3, 3)))
    with pytest.raises(ShapeError):
        conv2d(x, w)


def test_bias_shape_is_checked():
    x = Tensor(np.zeros((1, 1, 3, 3)))
    w = Tensor(np.zeros((2, 1, 1, 1)))
    with pytest.raises(ShapeError):
        conv2d(x, w, Tensor(np.zeros(3)))
