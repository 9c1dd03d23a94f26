"""Finite difference checks of every operator gradient."""

import numpy as np
import pytest

from edge_squeeze.models.enums import Mode, Padding
from edge_squeeze.tensor import (
    Tensor,
    add,
    batchnorm,
    binary_cross_entropy,
    conv2d,
    dense,
    depthwise_conv2d,
    dropout,
    global_avg_pool,
    gradcheck,
    max_pool2d,
    mean,
    mul,
    precision,
    relu,
    separable_conv2d,
    sigmoid,
    tensor_sum,
)

TOLERANCE = 1e-3
SEEDS = range(5)


def _dims(seed):
    """Return (batch, channels, size) varying with the seed."""
    return 1 + seed % 2, 2 + seed % 2, 4 + seed % 3


def _random(rng, *shape, offset=0.0):
    return Tensor(rng.standard_normal(shape) + offset)


def _distinct(rng, *shape, shift=0.0):
    """Values 0.1 apart and off the 0.05 grid so max and relu stay differentiable."""
    count = int(np.prod(shape))
    return Tensor(rng.permutation(count).reshape(shape) / 10.0 + 0.05 - shift)


@pytest.mark.parametrize("seed", SEEDS)
def test_conv_gradients(seed):
    """Test regular convolution for both paddings and strides."""
    rng = np.random.default_rng(seed)
    batch, channels, size = _dims(seed)
    with precision(np.float64):
        for stride, padding in ((1, Padding.SAME), (2, Padding.VALID), (2, Padding.SAME)):
            x, w = _random(rng, batch, channels, size, size), _random(rng, 3, channels, 3, 3)
            error = gradcheck(lambda a, b: conv2d(a, b, stride, padding), [x, w], seed=seed)
            assert error < TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_depthwise_and_separable_gradients(seed):
    """Test depthwise and separable convolutions."""
    rng = np.random.default_rng(seed)
    batch, channels, size = _dims(seed)
    stride = 1 + seed % 2
    with precision(np.float64):
        x = _random(rng, batch, channels, size, size)
        depthwise = _random(rng, channels, 1, 3, 3)
        error = gradcheck(lambda a, b: depthwise_conv2d(a, b, stride), [x, depthwise], seed=seed)
        assert error < TOLERANCE
        pointwise = _random(rng, 4, channels, 1, 1)
        error = gradcheck(separable_conv2d, [x, depthwise, pointwise], seed=seed)
        assert error < TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_batchnorm_gradients(seed):
    """Test batch normalization in train and eval mode."""
    rng = np.random.default_rng(seed)
    batch, channels, size = _dims(seed)
    with precision(np.float64):
        for mode in (Mode.TRAIN, Mode.EVAL):
            running_mean = rng.standard_normal(channels) * 0.1
            running_var = rng.uniform(0.5, 1.5, channels)

            def func(x, gamma, beta, mode=mode, stats=(running_mean, running_var)):
                return batchnorm(x, gamma, beta, *stats, mode)

            inputs = [
                _random(rng, batch + 1, channels, size, size),
                _random(rng, channels, offset=1.0),
                _random(rng, channels),
            ]
            assert gradcheck(func, inputs, seed=seed) < TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_pool_and_activation_gradients(seed):
    """Test pooling, relu and sigmoid."""
    rng = np.random.default_rng(seed)
    batch, channels, size = _dims(seed)
    shape = (batch, channels, size, size)
    half = int(np.prod(shape)) // 20
    with precision(np.float64):
        assert gradcheck(max_pool2d, [_distinct(rng, *shape)], seed=seed) < TOLERANCE
        assert gradcheck(relu, [_distinct(rng, *shape, shift=half / 10.0)], seed=seed) < TOLERANCE
        assert gradcheck(global_avg_pool, [_random(rng, *shape)], seed=seed) < TOLERANCE
        assert gradcheck(sigmoid, [_random(rng, batch + 2, size)], seed=seed) < TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_elementwise_gradients(seed):
    """Test broadcast add and mul, sum and mean."""
    rng = np.random.default_rng(seed)
    batch, channels, size = _dims(seed)
    with precision(np.float64):
        inputs = [_random(rng, batch, channels, size, size), _random(rng, 1, channels, 1, 1)]
        assert gradcheck(add, inputs, seed=seed) < TOLERANCE
        inputs = [_random(rng, batch, channels, size, size), _random(rng, 1, channels, 1, 1)]
        assert gradcheck(mul, inputs, seed=seed) < TOLERANCE
        assert gradcheck(tensor_sum, [_random(rng, batch, size)], seed=seed) < TOLERANCE
        assert gradcheck(mean, [_random(rng, channels, size)], seed=seed) < TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_head_gradients(seed):
    """Test dense, dropout and the loss."""
    rng = np.random.default_rng(seed)
    batch, _, size = _dims(seed)
    features = size + 2
    with precision(np.float64):
        x, w, b = _random(rng, batch + 3, features), _random(rng, features, 1), _random(rng, 1)
        assert gradcheck(dense, [x, w, b], seed=seed) < TOLERANCE
        error = gradcheck(
            lambda a: dropout(a, 0.3, Mode.TRAIN, np.random.default_rng(seed)),
            [_random(rng, batch + 3, features)],
            seed=seed,
        )
        assert error < TOLERANCE
        labels = rng.integers(0, 2, (batch + 3, 1)).astype(np.float64)
        probs = Tensor(rng.uniform(0.1, 0.9, (batch + 3, 1)))
        error = gradcheck(lambda p: binary_cross_entropy(p, labels), [probs], seed=seed)
        assert error < TOLERANCE
