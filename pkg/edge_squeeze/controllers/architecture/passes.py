"""Rewrite passes that squeeze an Xception graph.

Passes are pure: they return a new graph and record their name in
`applied_passes`. Applying a pass to a graph that already records it raises
PassReappliedError, modules that already have the rewritten form are skipped.
"""
from __future__ import annotations

from typing import List, Mapping

from edge_squeeze.constants import CHANNEL_MULTIPLE, FIRE_SQUEEZE_RATIO, MIN_CHANNELS
from edge_squeeze.models.architecture import ArchGraph, ArchModule, ResidualLink
from edge_squeeze.models.enums import Flow, LayerKind, LayerRole
from edge_squeeze.models.errors import GraphValidationError, PassReappliedError

from .inference import validate

PASS_STRATEGY1 = "strategy1"
PASS_CHANNEL_REDUCTION = "channel_reduction"
PASS_FIRE = "fire"

KERNEL_1X1 = (1, 1)
KERNEL_3X3 = (3, 3)


def round_channels(value: float) -> int:
    """Round a channel width to the nearest multiple of 8 (halves round up)."""
    return int(value / CHANNEL_MULTIPLE + 0.5) * CHANNEL_MULTIPLE


def _check_not_applied(graph: ArchGraph, pass_name: str) -> None:
    if pass_name in graph.applied_passes:
        raise PassReappliedError(
            f"Pass {pass_name} was already applied to graph {graph.name}"
        )


def rewire_channels(graph: ArchGraph) -> ArchGraph:
    """
    Re-infer input channels after widths changed.

    Conv-like layers take the width of their predecessor, batchnorm follows the
    current width, residual projections map module input to module output.
    """
    current = graph.input_shape[0]
    modules: List[ArchModule] = []
    links: List[ResidualLink] = []
    for module in graph.modules:
        module_in = current
        layers = []
        for layer in module.layers:
            if layer.kind.is_conv_like():
                layer = layer.with_changes(in_channels=current)
                current = layer.out_channels
            elif layer.kind == LayerKind.BATCHNORM:
                layer = layer.with_changes(in_channels=current, out_channels=current)
            layers.append(layer)
        modules.append(ArchModule(module.id, module.flow, tuple(layers)))
        if link := graph.residual_for(module.id):
            projection = []
            for layer in link.projection:
                if layer.kind.is_conv_like():
                    layer = layer.with_changes(in_channels=module_in, out_channels=current)
                elif layer.kind == LayerKind.BATCHNORM:
                    layer = layer.with_changes(in_channels=current, out_channels=current)
                projection.append(layer)
            links.append(ResidualLink(link.module_id, tuple(projection)))
    head = tuple(
        layer.with_changes(in_channels=current) if layer.kind == LayerKind.DENSE else layer
        for layer in graph.head
    )
    return ArchGraph(
        name=graph.name,
        input_shape=graph.input_shape,
        modules=tuple(modules),
        residual_links=tuple(links),
        head=head,
        applied_passes=graph.applied_passes,
    )


def apply_strategy1(graph: ArchGraph) -> ArchGraph:
    """Replace the first 3x3 separable conv of every module with a 1x1 one."""
    _check_not_applied(graph, PASS_STRATEGY1)
    modules = []
    for module in graph.modules:
        separable = module.separable_layers()
        if not separable or separable[0].kernel == KERNEL_1X1:
            modules.append(module)
            continue
        first = separable[0]
        layers = tuple(
            layer.with_changes(kernel=KERNEL_1X1) if layer is first else layer
            for layer in module.layers
        )
        modules.append(ArchModule(module.id, module.flow, layers))
    return graph.with_pass(PASS_STRATEGY1, modules=tuple(modules))


def _trunk_width(graph: ArchGraph) -> int:
    """Return the uniform width of the middle flow (0 without middle flow)."""
    middle = graph.modules_in(Flow.MIDDLE)
    return middle[0].out_channels if middle else 0


def apply_channel_reduction(graph: ArchGraph, factors: Mapping[Flow, float]) -> ArchGraph:
    """
    Divide separable conv widths of the entry and middle flows.

    Widths equal to the middle flow width use the middle divisor wherever they
    appear in those flows, so the identity shortcuts keep matching. Results are
    rounded to multiples of 8, the exit flow keeps its widths.
    """
    for flow, factor in factors.items():
        if flow not in (Flow.ENTRY, Flow.MIDDLE):
            raise GraphValidationError(
                f"Channel reduction only applies to entry/middle, got {flow.value}"
            )
        if factor < 1:
            raise GraphValidationError(
                f"Divisor for {flow.value} flow must be >= 1, got {factor}"
            )
    if all(factor == 1 for factor in factors.values()):
        return graph
    _check_not_applied(graph, PASS_CHANNEL_REDUCTION)
    trunk = _trunk_width(graph)
    middle_factor = factors.get(Flow.MIDDLE, 1)
    modules = []
    for module in graph.modules:
        if module.flow not in (Flow.ENTRY, Flow.MIDDLE):
            modules.append(module)
            continue
        layers = []
        for layer in module.layers:
            if layer.kind == LayerKind.SEPARABLE_CONV:
                factor = (
                    middle_factor
                    if layer.out_channels == trunk or module.flow == Flow.MIDDLE
                    else factors.get(module.flow, 1)
                )
                width = round_channels(layer.out_channels / factor)
                if width < MIN_CHANNELS:
                    raise GraphValidationError(
                        f"Reducing layer {layer.id} from {layer.out_channels} by {factor} "
                        f"leaves {width} channels (minimum {MIN_CHANNELS})"
                    )
                layer = layer.with_changes(out_channels=width)
            layers.append(layer)
        modules.append(ArchModule(module.id, module.flow, tuple(layers)))
    result = rewire_channels(graph.with_pass(PASS_CHANNEL_REDUCTION, modules=tuple(modules)))
    validate(result)
    return result


def _fire_module(module: ArchModule, ratio: float) -> ArchModule:
    """Rewrite the first three conv layers into squeeze, expand 1x1 and expand 3x3."""
    convs = module.conv_layers()
    if len(convs) < 3:
        raise GraphValidationError(
            f"Module {module.id} has {len(convs)} conv layers, a fire rewrite needs 3"
        )
    if convs[0].role == LayerRole.SQUEEZE:
        return module
    expand = convs[2].out_channels
    squeeze = max(MIN_CHANNELS, round_channels(expand * ratio))
    if squeeze >= expand:
        raise GraphValidationError(
            f"Module {module.id}: squeeze width {squeeze} is not below expand width {expand}"
        )
    rewritten = {
        convs[0].id: convs[0].with_changes(
            kernel=KERNEL_1X1, out_channels=squeeze, role=LayerRole.SQUEEZE
        ),
        convs[1].id: convs[1].with_changes(
            kernel=KERNEL_1X1, out_channels=expand, role=LayerRole.EXPAND
        ),
        convs[2].id: convs[2].with_changes(
            kernel=KERNEL_3X3, out_channels=expand, role=LayerRole.EXPAND
        ),
    }
    layers = tuple(rewritten.get(layer.id, layer) for layer in module.layers)
    return ArchModule(module.id, module.flow, layers)


def rewrite_fire_modules(graph: ArchGraph, ratio: float = FIRE_SQUEEZE_RATIO) -> ArchGraph:
    """Turn every middle flow module into a fire module."""
    _check_not_applied(graph, PASS_FIRE)
    modules = tuple(
        _fire_module(module, ratio) if module.flow == Flow.MIDDLE else module
        for module in graph.modules
    )
    result = rewire_channels(graph.with_pass(PASS_FIRE, modules=modules))
    validate(result)
    return result

