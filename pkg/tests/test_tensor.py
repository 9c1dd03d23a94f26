"""Tests for the tensor engine."""

import numpy as np
from pytest import approx, raises

from edge_squeeze.models.enums import Mode, Padding
from edge_squeeze.models.errors import NumericalError, OperatorError, ShapeError, TapeError
from edge_squeeze.tensor import (
    Adam,
    Tensor,
    add,
    batchnorm,
    binary_cross_entropy,
    conv2d,
    conv_output_size,
    current_tape,
    dense,
    depthwise_conv2d,
    dropout,
    global_avg_pool,
    max_pool2d,
    mean,
    mul,
    no_grad,
    precision,
    relu,
    separable_conv2d,
    sigmoid,
    tensor_sum,
)


def _naive_conv(x, w, stride):
    """Valid convolution with explicit loops."""
    batch, _, height, width = x.shape
    out_ch, _, kh, kw = w.shape
    out_h = (height - kh) // stride + 1
    out_w = (width - kw) // stride + 1
    out = np.zeros((batch, out_ch, out_h, out_w))
    for b in range(batch):
        for m in range(out_ch):
            for i in range(out_h):
                for j in range(out_w):
                    patch = x[b, :, i * stride : i * stride + kh, j * stride : j * stride + kw]
                    out[b, m, i, j] = (patch * w[m]).sum()
    return out


def test_tensor_basics():
    """Test construction and dtype handling."""
    t = Tensor([[1, 2], [3, 4]])
    assert t.shape == (2, 2)
    assert t.dtype == np.float32
    with precision(np.float64):
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32
    assert Tensor([2.5]).item() == 2.5
    with raises(ShapeError):
        Tensor(np.zeros((0, 3)))
    with raises(ShapeError):
        t.item()


def test_output_size():
    """Test spatial output sizes."""
    assert conv_output_size(224, 3, 2, Padding.VALID) == 111
    assert conv_output_size(111, 3, 1, "valid") == 109
    assert conv_output_size(109, 3, 2, Padding.SAME) == 55
    with raises(ShapeError):
        conv_output_size(2, 3, 1, Padding.VALID)
    with raises(OperatorError):
        conv_output_size(8, 3, 1, "reflect")


def test_conv_matches_naive():
    """Test convolution against a loop implementation."""
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 7, 7))
    w = rng.standard_normal((4, 3, 3, 3))
    with precision(np.float64):
        out = conv2d(Tensor(x), Tensor(w), stride=2, padding=Padding.VALID)
        assert out.shape == (2, 4, 3, 3)
        assert np.allclose(out.data, _naive_conv(x, w, 2))
        # same padding keeps the size at stride 1
        assert conv2d(Tensor(x), Tensor(w)).shape == (2, 4, 7, 7)
    with raises(ShapeError):
        conv2d(Tensor(x), Tensor(rng.standard_normal((4, 2, 3, 3))))
    with raises(ShapeError):
        conv2d(Tensor(x[0]), Tensor(w))


def test_depthwise_and_separable():
    """Test depthwise convolution is a per channel convolution."""
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 3, 5, 5))
    w = rng.standard_normal((3, 1, 3, 3))
    with precision(np.float64):
        out = depthwise_conv2d(Tensor(x), Tensor(w), padding=Padding.VALID).data
        for channel in range(3):
            expected = _naive_conv(x[:, channel : channel + 1], w[channel : channel + 1], 1)
            assert np.allclose(out[:, channel : channel + 1], expected)
        pointwise = rng.standard_normal((6, 3, 1, 1))
        sep = separable_conv2d(Tensor(x), Tensor(w), Tensor(pointwise))
        assert sep.shape == (1, 6, 5, 5)
    with raises(ShapeError):
        separable_conv2d(Tensor(x), Tensor(w), Tensor(rng.standard_normal((6, 2, 1, 1))))


def test_batchnorm_modes():
    """Test batch statistics in train mode and running statistics in eval mode."""
    rng = np.random.default_rng(3)
    x = Tensor(rng.standard_normal((4, 2, 3, 3)) * 5 + 2)
    gamma, beta = Tensor(np.ones(2)), Tensor(np.zeros(2))
    running_mean, running_var = np.zeros(2, np.float32), np.ones(2, np.float32)
    out = batchnorm(x, gamma, beta, running_mean, running_var, Mode.TRAIN)
    assert np.allclose(out.data.mean(axis=(0, 2, 3)), 0.0, atol=1e-5)
    assert np.allclose(out.data.std(axis=(0, 2, 3)), 1.0, atol=1e-3)
    # running stats moved towards the batch stats
    assert np.all(running_mean != 0.0)
    before = running_mean.copy()
    out = batchnorm(x, gamma, beta, running_mean, running_var, Mode.EVAL)
    assert np.array_equal(running_mean, before)
    expected = (x.data - running_mean[None, :, None, None]) / np.sqrt(
        running_var[None, :, None, None] + 1e-3
    )
    assert np.allclose(out.data, expected, atol=1e-4)


def test_pooling_and_activations():
    """Test max pooling, global pooling, relu and sigmoid."""
    x = Tensor(np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4) - 8)
    pooled = max_pool2d(x)
    assert pooled.shape == (1, 1, 2, 2)
    assert pooled.data[0, 0].tolist() == [[2.0, 3.0], [6.0, 7.0]]
    assert global_avg_pool(x).data.tolist() == [[-0.5]]
    assert relu(x).data.min() == 0.0
    probs = sigmoid(Tensor([-1000.0, -30.0, 0.0, 20.0, 1000.0])).data
    assert probs.tolist() == approx([0.0, 0.0, 0.5, 1.0, 1.0])
    assert np.all((probs > 0.0) & (probs < 1.0))
    assert probs[1] == approx(np.exp(-30.0), rel=1e-3)


def test_sigmoid_gradient_survives_large_logits():
    """Test sigmoid stays inside (0, 1) with a live gradient for large logits."""
    for dtype in (np.float32, np.float64):
        with precision(dtype):
            x = Tensor(np.array([-60.0, 20.0, 40.0]), requires_grad=True)
            out = sigmoid(x)
            assert out.dtype == dtype
            assert np.all((out.data > 0.0) & (out.data < 1.0))
            tensor_sum(out).backward()
            assert np.all(x.grad > 0.0)


def test_dropout():
    """Test inverted dropout."""
    x = Tensor(np.ones((100, 50)))
    assert dropout(x, 0.5, Mode.EVAL) is x
    out = dropout(x, 0.5, Mode.TRAIN, np.random.default_rng(0)).data
    assert set(np.unique(out).tolist()) == {0.0, 2.0}
    assert out.mean() == approx(1.0, abs=0.05)
    with raises(OperatorError):
        dropout(x, 1.0)
    with raises(OperatorError):
        dropout(x, 0.5, Mode.TRAIN)


def test_dense_and_loss():
    """Test dense layer and binary cross-entropy."""
    x = Tensor([[1.0, 2.0]])
    out = dense(x, Tensor([[1.0], [1.0]]), Tensor([0.5]))
    assert out.data.tolist() == [[3.5]]
    with raises(ShapeError):
        dense(x, Tensor([[1.0, 2.0, 3.0]]))
    loss = binary_cross_entropy(Tensor([[0.5], [0.5]]), [[1.0], [0.0]])
    assert loss.item() == approx(np.log(2.0), rel=1e-5)
    # saturated predictions stay finite
    loss = binary_cross_entropy(Tensor([[1.0]]), [[0.0]])
    assert np.isfinite(loss.item())
    with raises(ShapeError):
        binary_cross_entropy(Tensor([[0.5]]), [1.0, 0.0])


def test_backward_accumulates():
    """Test reverse mode through a shared input."""
    with precision(np.float64):
        a = Tensor([1.0, 2.0], requires_grad=True)
        b = Tensor([3.0], requires_grad=True)
        # loss = sum(a * b + a) -> da = b + 1, db = sum(a)
        tensor_sum(add(mul(a, b), a)).backward()
        assert a.grad.tolist() == [4.0, 4.0]
        assert b.grad.tolist() == [3.0]
        assert len(current_tape()) == 0
        mean(a * b).backward()
        assert a.grad.tolist() == [5.5, 5.5]


def test_tape_errors():
    """Test errors raised by the tape."""
    with raises(TapeError):
        Tensor([1.0]).backward()
    with raises(ShapeError):
        (Tensor([1.0, 2.0], requires_grad=True) * Tensor([2.0])).backward()
    current_tape().clear()
    with no_grad():
        out = mul(Tensor([1.0], requires_grad=True), Tensor([2.0]))
    assert out.is_leaf
    assert len(current_tape()) == 0
    with raises(NumericalError):
        add(Tensor([np.inf]), Tensor([1.0]))


def test_adam_step():
    """Test Adam moves against the gradient and round trips its state."""
    param = Tensor([1.0, -1.0], requires_grad=True)
    optimizer = Adam({"p": param}, lr=0.1)
    tensor_sum(mul(param, param)).backward()
    optimizer.step()
    # the first step moves every coordinate by lr
    assert param.data.tolist() == approx([0.9, -0.9], abs=1e-5)
    state = optimizer.state_dict()
    other = Adam({"p": Tensor([0.9, -0.9])}, lr=0.1)
    other.load_state_dict(state)
    assert other.step_count == 1
    assert np.array_equal(other.m["p"], optimizer.m["p"])
    with raises(ShapeError):
        Adam({"p": Tensor([1.0])}).load_state_dict(state)
