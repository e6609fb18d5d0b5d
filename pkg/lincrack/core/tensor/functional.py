"""
Differentiable tensor operations.

Each op is a ``Function`` subclass with an explicit backward pass, plus a
public wrapper that validates shapes and hyperparameters. Every op is
out-of-place and accumulates in a fixed order, so results do not depend on
how callers schedule independent evaluations.

Conventions:
    - convolution is cross-correlation (no kernel flip)
    - bilinear resizing samples at half-pixel centers and clamps at the edges
    - pooling windows are scanned row-major; max-pool ties go to the first
      maximum in the window
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from lincrack.core.exceptions import ConfigurationError, ShapeError, TensorError
from lincrack.core.tensor.params import ConvParams, as_pair, output_extent
from lincrack.core.tensor.tensor import DEFAULT_DTYPE, Function, Tensor

DEFAULT_BN_EPS = 1e-5
DEFAULT_BN_MOMENTUM = 0.1


def _tap_slice(index: int, dilation: int, stride: int, out: int) -> slice:
    """Input positions a kernel tap visits for every output position."""
    begin = index * dilation
    return slice(begin, begin + stride * (out - 1) + 1, stride)


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

class Conv2d(Function):
    """Grouped, dilated 2-D cross-correlation via im2col and one matmul."""

    def forward(self, x, w, b=None, params: ConvParams = None):
        batch, channels, height, width = x.shape
        out_channels, group_channels, kh, kw = w.shape
        groups = params.groups
        out_h, out_w = params.output_size(height, width, kh, kw)
        (sh, sw), (ph, pw), (dh, dw) = params.stride, params.padding, params.dilation

        xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
        cols = np.empty((batch, channels, kh, kw, out_h, out_w), dtype=DEFAULT_DTYPE)
        for i in range(kh):
            rows = _tap_slice(i, dh, sh, out_h)
            for j in range(kw):
                cols[:, :, i, j] = xp[:, :, rows, _tap_slice(j, dw, sw, out_w)]

        k = group_channels * kh * kw
        cols = cols.reshape(batch, groups, k, out_h * out_w)
        wmat = w.reshape(groups, out_channels // groups, k)
        out = np.matmul(wmat, cols).reshape(batch, out_channels, out_h, out_w)
        if b is not None:
            out = out + b.reshape(1, -1, 1, 1)

        self.params = params
        self.cols = cols
        self.wmat = wmat
        self.x_shape = x.shape
        self.padded_shape = xp.shape
        self.w_shape = w.shape
        self.out_hw = (out_h, out_w)
        self.has_bias = b is not None
        return out

    def backward(self, grad):
        batch, channels, height, width = self.x_shape
        out_channels, _, kh, kw = self.w_shape
        groups = self.params.groups
        out_h, out_w = self.out_hw
        (sh, sw), (ph, pw), (dh, dw) = self.params.stride, self.params.padding, self.params.dilation
        x_t, w_t = self.tensors[0], self.tensors[1]

        g = grad.reshape(batch, groups, out_channels // groups, out_h * out_w)

        dw_ = None
        if w_t.requires_grad:
            dw_ = np.matmul(g, self.cols.transpose(0, 1, 3, 2)).sum(axis=0).reshape(self.w_shape)

        dx = None
        if x_t.requires_grad:
            dcols = np.matmul(self.wmat.transpose(0, 2, 1), g)
            dcols = dcols.reshape(batch, channels, kh, kw, out_h, out_w)
            dxp = np.zeros(self.padded_shape, dtype=DEFAULT_DTYPE)
            for i in range(kh):
                rows = _tap_slice(i, dh, sh, out_h)
                for j in range(kw):
                    dxp[:, :, rows, _tap_slice(j, dw, sw, out_w)] += dcols[:, :, i, j]
            dx = dxp[:, :, ph:ph + height, pw:pw + width]

        if self.has_bias:
            db = grad.sum(axis=(0, 2, 3)) if self.tensors[2].requires_grad else None
            return dx, dw_, db
        return dx, dw_


def conv2d(
    input: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    params: Optional[ConvParams] = None,
) -> Tensor:
    """
    2-D convolution (cross-correlation) of a B×C×H×W input.

    Args:
        input: B×C×H×W tensor
        weight: O×(C/groups)×kh×kw tensor
        bias: Optional length-O tensor
        params: Stride, padding, dilation and groups

    Returns:
        B×O×H'×W' tensor

    Raises:
        ShapeError: On shape mismatch, groups not dividing the channel counts,
            or an output extent below 1
    """
    params = params or ConvParams()
    if input.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d needs 4-D input and weight, got {input.shape} and {weight.shape}")
    channels = input.shape[1]
    out_channels, group_channels = weight.shape[0], weight.shape[1]
    groups = params.groups
    if channels % groups or out_channels % groups:
        raise ShapeError(f"groups={groups} must divide input channels {channels} "
                         f"and output channels {out_channels}")
    if group_channels != channels // groups:
        raise ShapeError(f"weight expects {group_channels} channels per group, "
                         f"input provides {channels // groups}")
    params.output_size(input.shape[2], input.shape[3], weight.shape[2], weight.shape[3])
    if bias is None:
        return Conv2d.apply(input, weight, params=params)
    if bias.shape != (out_channels,):
        raise ShapeError(f"bias must have shape ({out_channels},), got {bias.shape}")
    return Conv2d.apply(input, weight, bias, params=params)


# ---------------------------------------------------------------------------
# Normalization and activations
# ---------------------------------------------------------------------------

class BatchNorm(Function):
    """Per-channel batch normalization over every axis but the channel axis."""

    def forward(self, x, gamma, beta, running_mean: Tensor = None, running_var: Tensor = None,
                eps: float = DEFAULT_BN_EPS, training: bool = False,
                momentum: float = DEFAULT_BN_MOMENTUM):
        axes = (0,) + tuple(range(2, x.ndim))
        shape = (1, x.shape[1]) + (1,) * (x.ndim - 2)
        count = x.size // x.shape[1]

        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            unbiased = var * count / (count - 1) if count > 1 else var
            running_mean.data = (1.0 - momentum) * running_mean.data + momentum * mean
            running_var.data = (1.0 - momentum) * running_var.data + momentum * unbiased
        else:
            mean = running_mean.data
            var = running_var.data

        denom = var + eps
        if np.any(denom <= 0):
            raise TensorError("batch_norm variance + eps must be positive in every channel")
        inv_std = 1.0 / np.sqrt(denom)
        xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)

        self.axes = axes
        self.shape = shape
        self.count = count
        self.training = training
        self.xhat = xhat
        self.inv_std = inv_std
        self.gamma = gamma
        return xhat * gamma.reshape(shape) + beta.reshape(shape)

    def backward(self, grad):
        axes, shape = self.axes, self.shape
        dbeta = grad.sum(axis=axes)
        dgamma = (grad * self.xhat).sum(axis=axes)
        dxhat = grad * self.gamma.reshape(shape)
        inv_std = self.inv_std.reshape(shape)
        if self.training:
            n = self.count
            dx = inv_std / n * (
                n * dxhat
                - dxhat.sum(axis=axes, keepdims=True)
                - self.xhat * (dxhat * self.xhat).sum(axis=axes, keepdims=True)
            )
        else:
            dx = dxhat * inv_std
        return dx, dgamma, dbeta


def batch_norm(
    input: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
    eps: float = DEFAULT_BN_EPS,
    training: bool = False,
    momentum: float = DEFAULT_BN_MOMENTUM,
) -> Tensor:
    """
    Batch normalization.

    Inference mode uses the running statistics. Training mode normalizes with
    the batch statistics (biased variance) and updates the running statistics
    in place: ``running = (1 − momentum)·running + momentum·batch`` with the
    unbiased batch variance.

    Raises:
        ConfigurationError: If eps is negative or momentum outside [0, 1]
        ShapeError: If a per-channel tensor length differs from C
    """
    if eps < 0:
        raise ConfigurationError(f"eps must be non-negative, got {eps}")
    if not 0.0 <= momentum <= 1.0:
        raise ConfigurationError(f"momentum must be in [0, 1], got {momentum}")
    if input.ndim < 2:
        raise ShapeError(f"batch_norm needs at least 2-D input, got {input.shape}")
    channels = input.shape[1]
    for name, t in (('gamma', gamma), ('beta', beta),
                    ('running_mean', running_mean), ('running_var', running_var)):
        if t.shape != (channels,):
            raise ShapeError(f"{name} must have shape ({channels},), got {t.shape}")
    return BatchNorm.apply(input, gamma, beta, running_mean=running_mean, running_var=running_var,
                           eps=eps, training=training, momentum=momentum)


class ReLU(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0.0)

    def backward(self, grad):
        return grad * self.mask


def relu(input: Tensor) -> Tensor:
    """Elementwise max(0, x)."""
    return ReLU.apply(input)


# ---------------------------------------------------------------------------
# Pooling and resizing
# ---------------------------------------------------------------------------

class MaxPool2d(Function):
    def forward(self, x, window=(2, 2), stride=(2, 2), padding=(0, 0)):
        (kh, kw), (sh, sw), (ph, pw) = window, stride, padding
        height, width = x.shape[2], x.shape[3]
        out_h = output_extent(height, kh, sh, ph)
        out_w = output_extent(width, kw, sw, pw)
        xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=-np.inf) \
            if (ph or pw) else x

        windows = np.empty((kh * kw,) + x.shape[:2] + (out_h, out_w), dtype=DEFAULT_DTYPE)
        for i in range(kh):
            for j in range(kw):
                windows[i * kw + j] = xp[:, :, _tap_slice(i, 1, sh, out_h), _tap_slice(j, 1, sw, out_w)]
        self.argmax = windows.argmax(axis=0)
        self.geometry = (window, stride, padding, x.shape, xp.shape, (out_h, out_w))
        return np.take_along_axis(windows, self.argmax[None], axis=0)[0]

    def backward(self, grad):
        (kh, kw), (sh, sw), (ph, pw), x_shape, padded_shape, (out_h, out_w) = self.geometry
        dxp = np.zeros(padded_shape, dtype=DEFAULT_DTYPE)
        for i in range(kh):
            for j in range(kw):
                hit = self.argmax == (i * kw + j)
                dxp[:, :, _tap_slice(i, 1, sh, out_h), _tap_slice(j, 1, sw, out_w)] += grad * hit
        return dxp[:, :, ph:ph + x_shape[2], pw:pw + x_shape[3]]


def max_pool(
    input: Tensor,
    window: Union[int, Tuple[int, int]],
    stride: Union[int, Tuple[int, int], None] = None,
    padding: Union[int, Tuple[int, int]] = 0,
) -> Tensor:
    """
    Windowed maximum over a B×C×H×W input; padding contributes −infinity.

    Args:
        window: Window size
        stride: Window step, defaults to the window size
        padding: Padding on each side, at most half the window

    Raises:
        ConfigurationError: On non-positive window/stride or oversized padding
        ShapeError: If an output extent would be below 1
    """
    window = as_pair(window, 'window')
    stride = as_pair(stride if stride is not None else window, 'stride')
    padding = as_pair(padding, 'padding')
    if min(window) <= 0 or min(stride) <= 0:
        raise ConfigurationError(f"window and stride must be positive, got {window}, {stride}")
    if min(padding) < 0 or padding[0] > window[0] // 2 or padding[1] > window[1] // 2:
        raise ConfigurationError(f"padding {padding} must be between 0 and half the window {window}")
    _pool_output_size(input, window, stride, padding)
    return MaxPool2d.apply(input, window=window, stride=stride, padding=padding)


class AvgPool2d(Function):
    def forward(self, x, window=(2, 2), stride=(2, 2)):
        (kh, kw), (sh, sw) = window, stride
        out_h = output_extent(x.shape[2], kh, sh, 0)
        out_w = output_extent(x.shape[3], kw, sw, 0)
        total = np.zeros(x.shape[:2] + (out_h, out_w), dtype=DEFAULT_DTYPE)
        for i in range(kh):
            for j in range(kw):
                total += x[:, :, _tap_slice(i, 1, sh, out_h), _tap_slice(j, 1, sw, out_w)]
        self.geometry = (window, stride, x.shape, (out_h, out_w))
        return total / (kh * kw)

    def backward(self, grad):
        (kh, kw), (sh, sw), x_shape, (out_h, out_w) = self.geometry
        share = grad / (kh * kw)
        dx = np.zeros(x_shape, dtype=DEFAULT_DTYPE)
        for i in range(kh):
            for j in range(kw):
                dx[:, :, _tap_slice(i, 1, sh, out_h), _tap_slice(j, 1, sw, out_w)] += share
        return dx


def avg_pool(
    input: Tensor,
    window: Union[int, Tuple[int, int]],
    stride: Union[int, Tuple[int, int], None] = None,
) -> Tensor:
    """Windowed mean without padding; odd extents are floored."""
    window = as_pair(window, 'window')
    stride = as_pair(stride if stride is not None else window, 'stride')
    if min(window) <= 0 or min(stride) <= 0:
        raise ConfigurationError(f"window and stride must be positive, got {window}, {stride}")
    _pool_output_size(input, window, stride, (0, 0))
    return AvgPool2d.apply(input, window=window, stride=stride)


def _pool_output_size(input: Tensor, window, stride, padding) -> Tuple[int, int]:
    if input.ndim != 4:
        raise ShapeError(f"pooling needs a 4-D input, got {input.shape}")
    out_h = output_extent(input.shape[2], window[0], stride[0], padding[0])
    out_w = output_extent(input.shape[3], window[1], stride[1], padding[1])
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"pooling output would be {out_h}x{out_w} for input {input.shape}")
    return out_h, out_w


class GlobalAvgPool(Function):
    def forward(self, x):
        self.x_shape = x.shape
        return x.mean(axis=(2, 3), keepdims=True)

    def backward(self, grad):
        height, width = self.x_shape[2], self.x_shape[3]
        return np.broadcast_to(grad / (height * width), self.x_shape).copy()


def avg_pool_global(input: Tensor) -> Tensor:
    """B×C×H×W → B×C×1×1 spatial mean."""
    if input.ndim != 4:
        raise ShapeError(f"avg_pool_global needs a 4-D input, got {input.shape}")
    return GlobalAvgPool.apply(input)


def _resize_coords(in_size: int, out_size: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Half-pixel source coordinates, clamped to the input extent."""
    scale = in_size / out_size
    src = (np.arange(out_size, dtype=DEFAULT_DTYPE) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    return lo, hi, src - lo


def _resize_matrix(in_size: int, out_size: int) -> np.ndarray:
    lo, hi, frac = _resize_coords(in_size, out_size)
    rows = np.arange(out_size)
    matrix = np.zeros((out_size, in_size), dtype=DEFAULT_DTYPE)
    np.add.at(matrix, (rows, lo), 1.0 - frac)
    np.add.at(matrix, (rows, hi), frac)
    return matrix


class BilinearResize(Function):
    def forward(self, x, out_h: int = 1, out_w: int = 1):
        in_h, in_w = x.shape[2], x.shape[3]
        lo, hi, frac = _resize_coords(in_h, out_h)
        top, bottom = x[:, :, lo, :], x[:, :, hi, :]
        # a + t·(b − a) keeps constant fields exact
        rows = top + frac[None, None, :, None] * (bottom - top)
        lo, hi, frac = _resize_coords(in_w, out_w)
        left, right = rows[:, :, :, lo], rows[:, :, :, hi]
        self.sizes = (in_h, in_w, out_h, out_w)
        return left + frac[None, None, None, :] * (right - left)

    def backward(self, grad):
        in_h, in_w, out_h, out_w = self.sizes
        dx = np.matmul(_resize_matrix(in_h, out_h).T, grad)
        return np.matmul(dx, _resize_matrix(in_w, out_w))


def bilinear_resize(input: Tensor, out_h: int, out_w: int) -> Tensor:
    """
    Bilinear resize of a B×C×H×W tensor to B×C×out_h×out_w.

    Samples at half-pixel centers, ``src = (dst + 0.5)·in/out − 0.5``, with
    source coordinates clamped to the input so edge values are repeated.
    """
    if input.ndim != 4:
        raise ShapeError(f"bilinear_resize needs a 4-D input, got {input.shape}")
    for name, value in (('out_h', out_h), ('out_w', out_w)):
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
            raise ShapeError(f"{name} must be a positive integer, got {value!r}")
    return BilinearResize.apply(input, out_h=int(out_h), out_w=int(out_w))


# ---------------------------------------------------------------------------
# Structure
# ---------------------------------------------------------------------------

class Concat(Function):
    def forward(self, *arrays, axis: int = 1):
        self.axis = axis
        self.extents = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        grads = []
        start = 0
        for t, extent in zip(self.tensors, self.extents):
            if t.requires_grad:
                index = [slice(None)] * grad.ndim
                index[self.axis] = slice(start, start + extent)
                grads.append(grad[tuple(index)])
            else:
                grads.append(None)
            start += extent
        return tuple(grads)


def concat(inputs: Sequence[Tensor], axis: int = 1) -> Tensor:
    """
    Concatenate tensors along ``axis`` keeping input order.

    Raises:
        ShapeError: If the list is empty or shapes differ off the axis
    """
    inputs = list(inputs)
    if not inputs:
        raise ShapeError("concat needs at least one input")
    ndim = inputs[0].ndim
    axis = axis % ndim if ndim else 0
    reference = inputs[0].shape
    for t in inputs[1:]:
        if t.ndim != ndim or any(a != b for k, (a, b) in enumerate(zip(t.shape, reference)) if k != axis):
            raise ShapeError(f"concat shapes differ off axis {axis}: {reference} vs {t.shape}")
    return Concat.apply(*inputs, axis=axis)


class Flatten(Function):
    def forward(self, x):
        self.x_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self.x_shape)


def flatten(input: Tensor) -> Tensor:
    """B×... → B×F."""
    return Flatten.apply(input)


class Add(Function):
    def forward(self, x, y):
        return x + y

    def backward(self, grad):
        return grad, grad


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of equally shaped tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"add needs equal shapes, got {a.shape} and {b.shape}")
    return Add.apply(a, b)


class Mul(Function):
    def forward(self, x, y):
        self.x, self.y = x, y
        return x * y

    def backward(self, grad):
        return grad * self.y, grad * self.x


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of equally shaped tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"mul needs equal shapes, got {a.shape} and {b.shape}")
    return Mul.apply(a, b)


class Sum(Function):
    def forward(self, x):
        self.x_shape = x.shape
        return np.asarray(x.sum())

    def backward(self, grad):
        return np.full(self.x_shape, float(grad), dtype=DEFAULT_DTYPE)


def tensor_sum(input: Tensor) -> Tensor:
    """Sum of all values as a scalar tensor."""
    return Sum.apply(input)


# ---------------------------------------------------------------------------
# Classifier head and losses
# ---------------------------------------------------------------------------

class Linear(Function):
    def forward(self, x, w, b=None):
        self.x, self.w = x, w
        self.has_bias = b is not None
        out = x @ w.T
        return out + b if b is not None else out

    def backward(self, grad):
        dx = grad @ self.w if self.tensors[0].requires_grad else None
        dw = grad.T @ self.x if self.tensors[1].requires_grad else None
        if self.has_bias:
            return dx, dw, grad.sum(axis=0)
        return dx, dw


def linear(input: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    Affine map ``x·Wᵀ + b`` of a B×F input with an O×F weight.

    Raises:
        ShapeError: On dimension mismatch
    """
    if input.ndim != 2 or weight.ndim != 2 or input.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear needs B×F input and O×F weight, got {input.shape} and {weight.shape}")
    if bias is None:
        return Linear.apply(input, weight)
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"bias must have shape ({weight.shape[0]},), got {bias.shape}")
    return Linear.apply(input, weight, bias)


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _log_softmax(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


class Softmax(Function):
    def forward(self, x, axis: int = 1):
        self.axis = axis
        self.out = _softmax(x, axis)
        return self.out

    def backward(self, grad):
        s = self.out
        return s * (grad - (grad * s).sum(axis=self.axis, keepdims=True))


def softmax(logits: Tensor, axis: int = 1) -> Tensor:
    """Max-shifted exponential normalization along ``axis``."""
    axis = axis % logits.ndim
    return Softmax.apply(logits, axis=axis)


class CrossEntropy(Function):
    def forward(self, logits, targets: np.ndarray = None):
        logp = _log_softmax(logits, axis=1)
        index = np.expand_dims(targets, axis=1)
        self.count = targets.size
        self.index = index
        self.logp = logp
        return np.asarray(-np.take_along_axis(logp, index, axis=1).sum() / self.count)

    def backward(self, grad):
        probs = np.exp(self.logp)
        np.put_along_axis(probs, self.index,
                          np.take_along_axis(probs, self.index, axis=1) - 1.0, axis=1)
        return probs * (float(grad) / self.count)


def cross_entropy_loss(logits: Tensor, targets: Union[np.ndarray, Sequence[int]]) -> Tensor:
    """
    Mean negative log softmax probability of the target class.

    Args:
        logits: B×K class scores, or B×K×H×W per-pixel scores
        targets: Integer labels of shape B, or B×H×W

    Raises:
        ShapeError: If target shape does not match the logits
        TensorError: If a target is outside {0..K−1}
    """
    targets = np.asarray(targets)
    expected = (logits.shape[0],) + logits.shape[2:]
    if logits.ndim < 2 or targets.shape != expected:
        raise ShapeError(f"targets must have shape {expected}, got {targets.shape}")
    if not np.all(np.equal(np.mod(targets, 1), 0)):
        raise TensorError("targets must be integer class indices")
    targets = targets.astype(np.int64)
    classes = logits.shape[1]
    if targets.min() < 0 or targets.max() >= classes:
        raise TensorError(f"targets must lie in 0..{classes - 1}, "
                          f"got range {targets.min()}..{targets.max()}")
    return CrossEntropy.apply(logits, targets=targets)
