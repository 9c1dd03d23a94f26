"""Minimal dense tensor engine with reverse-mode automatic differentiation."""

from .gradcheck import gradcheck  # noqa
from .ops import (  # noqa
    add,
    batchnorm,
    binary_cross_entropy,
    conv2d,
    conv_output_size,
    dense,
    depthwise_conv2d,
    dropout,
    global_avg_pool,
    max_pool2d,
    mean,
    mul,
    relu,
    separable_conv2d,
    sigmoid,
    tensor_sum,
)
from .optim import Adam  # noqa
from .tensor import (  # noqa
    GradTape,
    Tensor,
    backward,
    current_tape,
    get_dtype,
    is_grad_enabled,
    no_grad,
    precision,
)
