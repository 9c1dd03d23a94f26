"""Builders for the Xception baseline and its width-reduced toy variant."""
from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

from edge_squeeze.constants import (
    DEFAULT_DROPOUT_RATE,
    ENTRY_WIDTHS,
    EXIT_WIDTHS,
    INPUT_CHANNELS,
    INPUT_SIZE,
    MIDDLE_MODULE_COUNT,
    MIDDLE_WIDTH,
    MIN_CHANNELS,
    STEM_WIDTHS,
)
from edge_squeeze.models.architecture import ArchGraph, ArchModule, LayerSpec, ResidualLink
from edge_squeeze.models.enums import Flow, LayerKind, Padding

from .passes import round_channels

KERNEL_3X3 = (3, 3)
KERNEL_1X1 = (1, 1)


def _conv(layer_id: str, in_ch: int, out_ch: int, stride: int = 1) -> LayerSpec:
    return LayerSpec(
        layer_id, LayerKind.CONV, in_ch, out_ch, KERNEL_3X3, stride, Padding.VALID
    )


def _sepconv(layer_id: str, in_ch: int, out_ch: int) -> LayerSpec:
    return LayerSpec(layer_id, LayerKind.SEPARABLE_CONV, in_ch, out_ch, KERNEL_3X3)


def _bn(layer_id: str, channels: int) -> LayerSpec:
    return LayerSpec(layer_id, LayerKind.BATCHNORM, channels, channels)


def _relu(layer_id: str) -> LayerSpec:
    return LayerSpec(layer_id, LayerKind.RELU)


def _pool(layer_id: str) -> LayerSpec:
    return LayerSpec(layer_id, LayerKind.MAXPOOL, stride=2)


def _projection(module_id: str, in_ch: int, out_ch: int) -> ResidualLink:
    return ResidualLink(
        module_id,
        (
            LayerSpec(f"{module_id}_residual", LayerKind.CONV, in_ch, out_ch, KERNEL_1X1, 2),
            _bn(f"{module_id}_residual_bn", out_ch),
        ),
    )


def _downsampling_module(
    module_id: str,
    flow: Flow,
    in_ch: int,
    widths: Tuple[int, int],
    leading_relu: bool,
) -> ArchModule:
    """Two separable convs followed by max pooling (entry flow and first exit module)."""
    layers: List[LayerSpec] = []
    if leading_relu:
        layers.append(_relu(f"{module_id}_sepconv1_act"))
    layers += [
        _sepconv(f"{module_id}_sepconv1", in_ch, widths[0]),
        _bn(f"{module_id}_sepconv1_bn", widths[0]),
        _relu(f"{module_id}_sepconv2_act"),
        _sepconv(f"{module_id}_sepconv2", widths[0], widths[1]),
        _bn(f"{module_id}_sepconv2_bn", widths[1]),
        _pool(f"{module_id}_pool"),
    ]
    return ArchModule(module_id, flow, tuple(layers))


def _middle_module(module_id: str, width: int) -> ArchModule:
    layers: List[LayerSpec] = []
    for idx in (1, 2, 3):
        layers += [
            _relu(f"{module_id}_sepconv{idx}_act"),
            _sepconv(f"{module_id}_sepconv{idx}", width, width),
            _bn(f"{module_id}_sepconv{idx}_bn", width),
        ]
    return ArchModule(module_id, Flow.MIDDLE, tuple(layers))


def build_head(in_ch: int, dropout_rate: float = DEFAULT_DROPOUT_RATE) -> Tuple[LayerSpec, ...]:
    """Return the classification head: pooling, dropout and a single sigmoid unit."""
    return (
        LayerSpec("head_pool", LayerKind.GLOBAL_AVG_POOL),
        LayerSpec("head_dropout", LayerKind.DROPOUT, rate=dropout_rate),
        LayerSpec("head_dense", LayerKind.DENSE, in_ch, 1),
        LayerSpec("head_sigmoid", LayerKind.SIGMOID),
    )


def build_xception(
    name: str = "baseline",
    input_shape: Tuple[int, int, int] = (INPUT_CHANNELS, INPUT_SIZE, INPUT_SIZE),
    stem_widths: Sequence[int] = STEM_WIDTHS,
    entry_widths: Sequence[int] = ENTRY_WIDTHS,
    middle_width: int = MIDDLE_WIDTH,
    exit_widths: Sequence[int] = EXIT_WIDTHS,
    middle_modules: int = MIDDLE_MODULE_COUNT,
    dropout_rate: float = DEFAULT_DROPOUT_RATE,
) -> ArchGraph:
    """
    Build an Xception module graph.

    Entry flow: a two-conv stem and three downsampling modules.
    Middle flow: identical modules of three separable convs with identity shortcuts.
    Exit flow: one downsampling module and a final module without shortcut.
    """
    stem_a, stem_b = stem_widths
    modules = [
        ArchModule(
            "block1",
            Flow.ENTRY,
            (
                _conv("block1_conv1", input_shape[0], stem_a, stride=2),
                _bn("block1_conv1_bn", stem_a),
                _relu("block1_conv1_act"),
                _conv("block1_conv2", stem_a, stem_b),
                _bn("block1_conv2_bn", stem_b),
                _relu("block1_conv2_act"),
            ),
        )
    ]
    links = []
    in_ch = stem_b
    for idx, width in enumerate(entry_widths):
        module_id = f"block{idx + 2}"
        modules.append(
            _downsampling_module(module_id, Flow.ENTRY, in_ch, (width, width), idx > 0)
        )
        links.append(_projection(module_id, in_ch, width))
        in_ch = width
    if in_ch != middle_width:
        raise ValueError(
            f"Entry flow emits {in_ch} channels but the middle flow expects {middle_width}"
        )
    first_middle = len(modules) + 1
    for idx in range(middle_modules):
        module_id = f"block{first_middle + idx}"
        modules.append(_middle_module(module_id, middle_width))
        links.append(ResidualLink(module_id))
    exit_a, exit_b, exit_c, exit_d = exit_widths
    module_id = f"block{len(modules) + 1}"
    modules.append(
        _downsampling_module(module_id, Flow.EXIT, middle_width, (exit_a, exit_b), True)
    )
    links.append(_projection(module_id, middle_width, exit_b))
    module_id = f"block{len(modules) + 1}"
    modules.append(
        ArchModule(
            module_id,
            Flow.EXIT,
            (
                _sepconv(f"{module_id}_sepconv1", exit_b, exit_c),
                _bn(f"{module_id}_sepconv1_bn", exit_c),
                _relu(f"{module_id}_sepconv1_act"),
                _sepconv(f"{module_id}_sepconv2", exit_c, exit_d),
                _bn(f"{module_id}_sepconv2_bn", exit_d),
                _relu(f"{module_id}_sepconv2_act"),
            ),
        )
    )
    return ArchGraph(
        name=name,
        input_shape=tuple(input_shape),
        modules=tuple(modules),
        residual_links=tuple(links),
        head=build_head(exit_d, dropout_rate),
    )


def build_xception_baseline(dropout_rate: float = DEFAULT_DROPOUT_RATE) -> ArchGraph:
    """Return the 14 module Xception baseline for 224x224x3 inputs."""
    return build_xception(dropout_rate=dropout_rate)


def build_toy_baseline(
    width_divisor: int,
    input_size: int,
    dropout_rate: float = DEFAULT_DROPOUT_RATE,
    name: Optional[str] = None,
) -> ArchGraph:
    """Return the baseline with every width divided (rounded to multiples of 8)."""

    def scale(width: int) -> int:
        return max(MIN_CHANNELS, round_channels(width / width_divisor))

    entry = [scale(x) for x in ENTRY_WIDTHS]
    return build_xception(
        name=name or f"toy_baseline_d{width_divisor}",
        input_shape=(INPUT_CHANNELS, input_size, input_size),
        stem_widths=[scale(x) for x in STEM_WIDTHS],
        entry_widths=entry,
        middle_width=entry[-1],
        exit_widths=[entry[-1]] + [scale(x) for x in EXIT_WIDTHS[1:]],
        dropout_rate=dropout_rate,
    )
