"""Compare analytic gradients with central finite differences."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import ops
from .tensor import Tensor, current_tape, no_grad

ERROR_FLOOR = 1e-2


def _scalar_loss(out: Tensor, projection: np.ndarray) -> Tensor:
    """Reduce an op output to a scalar through a fixed random projection."""
    if out.size == 1:
        return ops.tensor_sum(out)
    return ops.tensor_sum(ops.mul(out, Tensor(projection, dtype=out.dtype)))


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-3,
    seed: int = 0,
) -> float:
    """
    Return the max relative error between analytic and numeric gradients.

    fn must be a pure function of its inputs (reseed any rng inside it).
    Non-scalar outputs are reduced with a fixed random projection so every
    output element contributes. Use within precision(np.float64).
    """
    for tensor in inputs:
        tensor.requires_grad = True
        tensor.zero_grad()
    current_tape().clear()
    with no_grad():
        sample = fn(*inputs)
    projection = np.random.default_rng(seed).standard_normal(sample.shape)

    _scalar_loss(fn(*inputs), projection).backward()

    max_error = 0.0
    for tensor in inputs:
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        numeric = np.zeros_like(tensor.data)
        flat = tensor.data.reshape(-1)
        flat_numeric = numeric.reshape(-1)
        with no_grad():
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                plus = _scalar_loss(fn(*inputs), projection).item()
                flat[idx] = orig - h
                minus = _scalar_loss(fn(*inputs), projection).item()
                flat[idx] = orig
                flat_numeric[idx] = (plus - minus) / (2 * h)
        scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), ERROR_FLOOR)
        max_error = max(max_error, float(np.max(np.abs(analytic - numeric) / scale)))
    return max_error
