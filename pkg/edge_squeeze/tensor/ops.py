"""Operators of the tensor engine with their gradient rules.

Exactly the set the squeezed Xception needs: convolutions (regular, depthwise,
separable), batch normalization, relu, 3x3 max pooling, global average pooling,
dense, sigmoid, dropout, residual add and the binary cross-entropy loss.
All 4-D tensors use (batch, channels, height, width) layout.
"""
from __future__ import annotations

from typing import Optional, Tuple, Union

import numpy as np

from edge_squeeze.constants import BATCHNORM_EPSILON, BATCHNORM_MOMENTUM, MAXPOOL_WINDOW
from edge_squeeze.models.enums import Mode, Padding
from edge_squeeze.models.errors import OperatorError, ShapeError

from .tensor import Tensor, record

PROB_CLIP = 1e-7

PaddingType = Union[Padding, str]


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back to the operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _as_tensor(value) -> Tensor:
    """Wrap constants so they can take part in binary ops."""
    return value if isinstance(value, Tensor) else Tensor(value)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (broadcasting) sum, used for residual joins."""
    a, b = _as_tensor(a), _as_tensor(b)

    def grad_fn(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return record("add", a.data + b.data, (a, b), grad_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (broadcasting) product."""
    a, b = _as_tensor(a), _as_tensor(b)

    def grad_fn(grad):
        return _unbroadcast(grad * b.data, a.shape), _unbroadcast(grad * a.data, b.shape)

    return record("mul", a.data * b.data, (a, b), grad_fn)


def tensor_sum(a: Tensor) -> Tensor:
    """Sum of all elements."""

    def grad_fn(grad):
        return (np.broadcast_to(grad, a.shape).astype(a.dtype),)

    return record("sum", np.asarray(a.data.sum(), dtype=a.dtype), (a,), grad_fn)


def mean(a: Tensor) -> Tensor:
    """Mean of all elements."""

    def grad_fn(grad):
        return (np.broadcast_to(grad / a.size, a.shape).astype(a.dtype),)

    return record("mean", np.asarray(a.data.mean(), dtype=a.dtype), (a,), grad_fn)


def _padding(value: PaddingType) -> Padding:
    """Parse padding attribute."""
    try:
        return value if isinstance(value, Padding) else Padding(value)
    except ValueError as err:
        raise OperatorError(f"Unsupported padding: {value}") from err


def conv_output_size(size: int, kernel: int, stride: int, padding: PaddingType) -> int:
    """Return the output length of one spatial dimension."""
    if stride < 1:
        raise OperatorError(f"Stride must be positive, got {stride}")
    if _padding(padding) == Padding.SAME:
        return -(-size // stride)
    out = (size - kernel) // stride + 1
    if out < 1:
        raise ShapeError(f"Kernel {kernel} does not fit input of size {size} (valid padding)")
    return out


def _pads(size: int, kernel: int, stride: int, padding: PaddingType) -> Tuple[int, int, int]:
    """Return (output size, pad before, pad after) for one spatial dimension."""
    out = conv_output_size(size, kernel, stride, padding)
    if _padding(padding) == Padding.VALID:
        return out, 0, 0
    total = max((out - 1) * stride + kernel - size, 0)
    return out, total // 2, total - total // 2


def _window_geometry(x: np.ndarray, kh: int, kw: int, stride: int, padding: PaddingType):
    """Return output size and paddings for a sliding window op."""
    out_h, top, bottom = _pads(x.shape[2], kh, stride, padding)
    out_w, left, right = _pads(x.shape[3], kw, stride, padding)
    return out_h, out_w, ((0, 0), (0, 0), (top, bottom), (left, right))


def _offset_slice(i: int, j: int, out_h: int, out_w: int, stride: int):
    """Return the strided input slice that kernel offset (i, j) reads."""
    return (
        slice(None),
        slice(None),
        slice(i, i + stride * (out_h - 1) + 1, stride),
        slice(j, j + stride * (out_w - 1) + 1, stride),
    )


def _check_4d(x: Tensor, op: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{op} expects a 4-D (B, C, H, W) input, got shape {x.shape}")


def conv2d(
    x: Tensor, kernel: Tensor, stride: int = 1, padding: PaddingType = Padding.SAME
) -> Tensor:
    """Regular convolution with a [M, C, kh, kw] kernel, no bias."""
    _check_4d(x, "conv2d")
    if kernel.ndim != 4 or kernel.shape[1] != x.shape[1]:
        raise ShapeError(
            f"conv2d kernel {kernel.shape} does not match {x.shape[1]} input channels"
        )
    out_ch, _, kh, kw = kernel.shape
    out_h, out_w, pads = _window_geometry(x.data, kh, kw, stride, padding)
    xp = np.pad(x.data, pads)
    w = kernel.data
    out = np.zeros((x.shape[0], out_h, out_w, out_ch), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[_offset_slice(i, j, out_h, out_w, stride)]
            out += np.tensordot(patch, w[:, :, i, j], axes=([1], [1]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def grad_fn(grad):
        grad_t = grad.transpose(0, 2, 3, 1)
        grad_w = np.zeros_like(w)
        grad_xp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                window = _offset_slice(i, j, out_h, out_w, stride)
                grad_w[:, :, i, j] = np.tensordot(grad, xp[window], axes=([0, 2, 3], [0, 2, 3]))
                grad_xp[window] += np.tensordot(grad_t, w[:, :, i, j], axes=([3], [0])).transpose(
                    0, 3, 1, 2
                )
        top, left = pads[2][0], pads[3][0]
        grad_x = grad_xp[:, :, top : top + x.shape[2], left : left + x.shape[3]]
        return grad_x, grad_w

    return record("conv2d", out, (x, kernel), grad_fn)


def depthwise_conv2d(
    x: Tensor, kernel: Tensor, stride: int = 1, padding: PaddingType = Padding.SAME
) -> Tensor:
    """Depthwise convolution, one [1, kh, kw] filter per input channel."""
    _check_4d(x, "depthwise_conv2d")
    if kernel.ndim != 4 or kernel.shape[0] != x.shape[1] or kernel.shape[1] != 1:
        raise ShapeError(
            f"depthwise kernel {kernel.shape} does not match {x.shape[1]} input channels"
        )
    _, _, kh, kw = kernel.shape
    out_h, out_w, pads = _window_geometry(x.data, kh, kw, stride, padding)
    xp = np.pad(x.data, pads)
    w = kernel.data
    out = np.zeros((x.shape[0], x.shape[1], out_h, out_w), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            out += xp[_offset_slice(i, j, out_h, out_w, stride)] * w[None, :, 0, i, j, None, None]

    def grad_fn(grad):
        grad_w = np.zeros_like(w)
        grad_xp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                window = _offset_slice(i, j, out_h, out_w, stride)
                grad_w[:, 0, i, j] = (grad * xp[window]).sum(axis=(0, 2, 3))
                grad_xp[window] += grad * w[None, :, 0, i, j, None, None]
        top, left = pads[2][0], pads[3][0]
        grad_x = grad_xp[:, :, top : top + x.shape[2], left : left + x.shape[3]]
        return grad_x, grad_w

    return record("depthwise_conv2d", out, (x, kernel), grad_fn)


def separable_conv2d(
    x: Tensor,
    depthwise_kernel: Tensor,
    pointwise_kernel: Tensor,
    stride: int = 1,
    padding: PaddingType = Padding.SAME,
) -> Tensor:
    """Depthwise convolution followed by a 1x1 channel mixing convolution."""
    if pointwise_kernel.ndim != 4 or pointwise_kernel.shape[2:] != (1, 1):
        raise ShapeError(f"pointwise kernel must be [M, C, 1, 1], got {pointwise_kernel.shape}")
    if pointwise_kernel.shape[1] != depthwise_kernel.shape[0]:
        raise ShapeError(
            f"pointwise kernel {pointwise_kernel.shape} does not match depthwise "
            f"kernel {depthwise_kernel.shape}"
        )
    hidden = depthwise_conv2d(x, depthwise_kernel, stride, padding)
    return conv2d(hidden, pointwise_kernel, 1, Padding.VALID)


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    mode: Mode = Mode.TRAIN,
    epsilon: float = BATCHNORM_EPSILON,
    momentum: float = BATCHNORM_MOMENTUM,
) -> Tensor:
    """
    Per-channel batch normalization.

    Train mode normalizes by batch statistics and updates the running statistics
    in place, eval mode normalizes by the running statistics.
    """
    _check_4d(x, "batchnorm")
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(f"batchnorm gamma/beta must have {channels} entries")
    axes = (0, 2, 3)
    count = x.shape[0] * x.shape[2] * x.shape[3]
    if mode == Mode.TRAIN:
        batch_mean = x.data.mean(axis=axes)
        batch_var = x.data.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * batch_mean.astype(running_mean.dtype)
        running_var *= momentum
        running_var += (1.0 - momentum) * batch_var.astype(running_var.dtype)
    else:
        batch_mean = running_mean.astype(x.dtype)
        batch_var = running_var.astype(x.dtype)
    inv_std = (1.0 / np.sqrt(batch_var + epsilon)).astype(x.dtype)
    x_hat = (x.data - batch_mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = x_hat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

    def grad_fn(grad):
        grad_gamma = (grad * x_hat).sum(axis=axes)
        grad_beta = grad.sum(axis=axes)
        grad_xhat = grad * gamma.data[None, :, None, None]
        if mode == Mode.TRAIN:
            grad_x = (
                inv_std[None, :, None, None]
                / count
                * (
                    count * grad_xhat
                    - grad_xhat.sum(axis=axes)[None, :, None, None]
                    - x_hat * (grad_xhat * x_hat).sum(axis=axes)[None, :, None, None]
                )
            )
        else:
            grad_x = grad_xhat * inv_std[None, :, None, None]
        return grad_x, grad_gamma, grad_beta

    return record("batchnorm", out, (x, gamma, beta), grad_fn)


def relu(x: Tensor) -> Tensor:
    """Rectified linear unit."""
    mask = x.data > 0

    def grad_fn(grad):
        return (grad * mask,)

    return record("relu", x.data * mask, (x,), grad_fn)


def max_pool2d(
    x: Tensor,
    window: int = MAXPOOL_WINDOW,
    stride: int = 2,
    padding: PaddingType = Padding.SAME,
) -> Tensor:
    """Max pooling over window x window patches, padded cells never win."""
    _check_4d(x, "max_pool2d")
    out_h, out_w, pads = _window_geometry(x.data, window, window, stride, padding)
    xp = np.pad(x.data, pads, constant_values=-np.inf)
    offsets = [(i, j) for i in range(window) for j in range(window)]
    stacked = np.stack([xp[_offset_slice(i, j, out_h, out_w, stride)] for i, j in offsets])
    winner = stacked.argmax(axis=0)
    out = np.take_along_axis(stacked, winner[None], axis=0)[0]

    def grad_fn(grad):
        grad_xp = np.zeros_like(xp)
        for idx, (i, j) in enumerate(offsets):
            grad_xp[_offset_slice(i, j, out_h, out_w, stride)] += grad * (winner == idx)
        top, left = pads[2][0], pads[3][0]
        return (grad_xp[:, :, top : top + x.shape[2], left : left + x.shape[3]],)

    return record("max_pool2d", np.ascontiguousarray(out), (x,), grad_fn)


def global_avg_pool(x: Tensor) -> Tensor:
    """Average over the spatial dimensions, (B, C, H, W) -> (B, C)."""
    _check_4d(x, "global_avg_pool")
    spatial = x.shape[2] * x.shape[3]

    def grad_fn(grad):
        return (np.broadcast_to(grad[:, :, None, None] / spatial, x.shape).astype(x.dtype),)

    return record("global_avg_pool", x.data.mean(axis=(2, 3)), (x,), grad_fn)


def dense(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Fully connected layer, (B, in) @ [in, out] + [out]."""
    if x.ndim != 2:
        raise ShapeError(f"dense expects a 2-D (batch, features) input, got shape {x.shape}")
    if weight.ndim != 2 or weight.shape[0] != x.shape[1]:
        raise ShapeError(f"dense weight {weight.shape} does not match {x.shape[1]} features")
    out = x.data @ weight.data
    if bias is not None:
        out = out + bias.data

    def grad_fn(grad):
        grads = [grad @ weight.data.T, x.data.T @ grad]
        if bias is not None:
            grads.append(grad.sum(axis=0))
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("dense", out, inputs, grad_fn)


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function, split by sign for stability and kept strictly inside (0, 1)."""
    decay = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1.0 / (1.0 + decay), decay / (1.0 + decay))
    info = np.finfo(x.dtype)
    out = np.clip(out, info.tiny, 1.0 - info.epsneg).astype(x.dtype)

    def grad_fn(grad):
        return (grad * out * (1.0 - out),)

    return record("sigmoid", out, (x,), grad_fn)


def dropout(
    x: Tensor,
    rate: float,
    mode: Mode = Mode.TRAIN,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Inverted dropout, identity in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise OperatorError(f"Dropout rate must be in [0, 1), got {rate}")
    if mode == Mode.EVAL or rate == 0.0:
        return x
    if rng is None:
        raise OperatorError("dropout in train mode needs a random generator")
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)

    def grad_fn(grad):
        return (grad * mask,)

    return record("dropout", x.data * mask, (x,), grad_fn)


def binary_cross_entropy(prob: Tensor, target) -> Tensor:
    """Mean binary cross-entropy of probabilities against 0/1 targets."""
    labels = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=prob.dtype)
    if labels.shape != prob.shape:
        raise ShapeError(f"targets {labels.shape} do not match predictions {prob.shape}")
    clipped = np.clip(prob.data, PROB_CLIP, 1.0 - PROB_CLIP)
    losses = -(labels * np.log(clipped) + (1.0 - labels) * np.log(1.0 - clipped))
    inside = (prob.data > PROB_CLIP) & (prob.data < 1.0 - PROB_CLIP)

    def grad_fn(grad):
        local = (clipped - labels) / (clipped * (1.0 - clipped)) / prob.size
        return (grad * local * inside,)

    return record(
        "binary_cross_entropy", np.asarray(losses.mean(), dtype=prob.dtype), (prob,), grad_fn
    )
