"""Shape inference, validation and parameter accounting of architecture graphs."""
from __future__ import annotations

from typing import Dict, List, Tuple

from edge_squeeze.constants import MAXPOOL_WINDOW
from edge_squeeze.models.architecture import (
    ArchGraph,
    ChannelShape,
    LayerParams,
    LayerSpec,
    ParamReport,
    ShapeTable,
)
from edge_squeeze.models.enums import LayerKind
from edge_squeeze.models.errors import GraphValidationError, ShapeError
from edge_squeeze.tensor.ops import conv_output_size

VALID_KERNELS = ((1, 1), (3, 3))
HEAD_ONLY_KINDS = (
    LayerKind.GLOBAL_AVG_POOL,
    LayerKind.DENSE,
    LayerKind.DROPOUT,
    LayerKind.SIGMOID,
)
MODULE_ONLY_KINDS = (LayerKind.CONV, LayerKind.SEPARABLE_CONV, LayerKind.MAXPOOL)


def _spatial(shape: ChannelShape, layer: LayerSpec, window: int, diagnostics: List[str]):
    """Return output (height, width) of a windowed layer."""
    try:
        return tuple(
            conv_output_size(size, window, layer.stride, layer.padding) for size in shape[1:]
        )
    except ShapeError as err:
        diagnostics.append(f"{layer.id}: {err}")
        return shape[1:]


def _infer_layer(
    layer: LayerSpec, shape: ChannelShape, diagnostics: List[str]
) -> ChannelShape:
    """Return the output shape of a layer, appending problems to diagnostics."""
    kind = layer.kind
    if kind.is_conv_like():
        if layer.kernel not in VALID_KERNELS:
            diagnostics.append(f"{layer.id}: kernel {layer.kernel} is not 1x1 or 3x3")
        if not layer.in_channels or not layer.out_channels or layer.out_channels < 1:
            diagnostics.append(f"{layer.id}: channel counts must be positive")
        if len(shape) != 3:
            diagnostics.append(f"{layer.id}: needs a (C, H, W) input, receives {shape}")
            return shape
        if layer.in_channels != shape[0]:
            diagnostics.append(
                f"{layer.id}: expects {layer.in_channels} channels, receives {shape[0]}"
            )
        window = (layer.kernel or (1, 1))[0]
        return (layer.out_channels or shape[0], *_spatial(shape, layer, window, diagnostics))
    if layer.kernel is not None:
        diagnostics.append(f"{layer.id}: {kind.value} layers carry no kernel")
    if kind == LayerKind.BATCHNORM:
        if layer.in_channels != shape[0] or layer.out_channels != shape[0]:
            diagnostics.append(
                f"{layer.id}: normalizes {layer.in_channels} channels, receives {shape[0]}"
            )
        return shape
    if kind == LayerKind.MAXPOOL:
        if len(shape) != 3:
            diagnostics.append(f"{layer.id}: needs a (C, H, W) input, receives {shape}")
            return shape
        return (shape[0], *_spatial(shape, layer, MAXPOOL_WINDOW, diagnostics))
    if kind == LayerKind.GLOBAL_AVG_POOL:
        if len(shape) != 3:
            diagnostics.append(f"{layer.id}: needs a (C, H, W) input, receives {shape}")
            return shape
        return (shape[0],)
    if kind == LayerKind.DENSE:
        if len(shape) != 1:
            diagnostics.append(f"{layer.id}: needs a flat input, receives {shape}")
            return shape
        if layer.in_channels != shape[0] or not layer.out_channels:
            diagnostics.append(
                f"{layer.id}: expects {layer.in_channels} features, receives {shape[0]}"
            )
        return (layer.out_channels or shape[0],)
    if kind == LayerKind.DROPOUT and not 0 <= (layer.rate or 0.0) < 1:
        diagnostics.append(f"{layer.id}: dropout rate {layer.rate} outside [0, 1)")
    return shape


def infer_shapes(graph: ArchGraph) -> Tuple[ShapeTable, List[str]]:
    """Run shape inference, returning the table and any diagnostics."""
    diagnostics: List[str] = []
    layer_shapes: Dict[str, ChannelShape] = {}
    boundaries: Dict[str, ChannelShape] = {}
    shape: ChannelShape = tuple(graph.input_shape)

    def visit(layer: LayerSpec, shape: ChannelShape) -> ChannelShape:
        if layer.id in layer_shapes:
            diagnostics.append(f"{layer.id}: duplicate layer id")
        shape = _infer_layer(layer, shape, diagnostics)
        layer_shapes[layer.id] = shape
        return shape

    for module in graph.modules:
        module_in = shape
        boundaries[f"{module.id}.in"] = module_in
        for layer in module.layers:
            if layer.kind in HEAD_ONLY_KINDS:
                diagnostics.append(f"{layer.id}: {layer.kind.value} is only legal in the head")
            shape = visit(layer, shape)
        boundaries[f"{module.id}.out"] = shape
        if link := graph.residual_for(module.id):
            shortcut = module_in
            for layer in link.projection:
                shortcut = visit(layer, shortcut)
            if shortcut != shape:
                diagnostics.append(
                    f"residual {link.source} -> {link.target} joins {shortcut} with {shape}"
                )
    known = {x.id for x in graph.modules}
    for link in graph.residual_links:
        if link.module_id not in known:
            diagnostics.append(f"residual references unknown module {link.module_id}")
    for layer in graph.head:
        if layer.kind in MODULE_ONLY_KINDS:
            diagnostics.append(f"{layer.id}: {layer.kind.value} is not legal in the head")
        shape = visit(layer, shape)
    if not graph.head or graph.head[-1].kind != LayerKind.SIGMOID or shape != (1,):
        diagnostics.append(f"head must end in a single sigmoid unit, ends in {shape}")
    return ShapeTable(layer_shapes, boundaries, shape), diagnostics


def validate(graph: ArchGraph) -> ShapeTable:
    """Return the shape table of a valid graph, raise with per-layer diagnostics otherwise."""
    table, diagnostics = infer_shapes(graph)
    if diagnostics:
        raise GraphValidationError(f"Graph {graph.name} failed validation", diagnostics)
    return table


def layer_param_count(layer: LayerSpec) -> Tuple[int, int]:
    """Return (parameters, filter term) of a single layer."""
    kind = layer.kind
    if kind == LayerKind.CONV:
        kh, kw = layer.kernel
        params = layer.in_channels * layer.out_channels * kh * kw
        return params, params
    if kind == LayerKind.SEPARABLE_CONV:
        kh, kw = layer.kernel
        depthwise = layer.in_channels * kh * kw
        return depthwise + layer.in_channels * layer.out_channels, depthwise
    if kind == LayerKind.BATCHNORM:
        return 2 * layer.out_channels, 0
    if kind == LayerKind.DENSE:
        weights = layer.in_channels * layer.out_channels
        return weights + layer.out_channels, weights
    return 0, 0


def count_params(graph: ArchGraph) -> ParamReport:
    """
    Return the parameter accounting of a graph.

    Conv: N x M x kh x kw. Separable: C x kh x kw + C x M. Batchnorm: 2 per channel
    (running statistics are not trainable). Dense: in x out + out.
    """
    table = validate(graph)
    entries = []
    per_module: Dict[str, int] = {}
    per_flow: Dict[str, int] = {}
    for module_id, layer in graph.iter_layers():
        if not layer.kind.is_parameterized():
            continue
        params, filter_term = layer_param_count(layer)
        out_shape = table.layer_shapes[layer.id]
        spatial = out_shape[1] * out_shape[2] if len(out_shape) == 3 else 1
        if layer.kind == LayerKind.BATCHNORM:
            mult_adds = 0
        elif layer.kind == LayerKind.DENSE:
            mult_adds = filter_term
        else:
            mult_adds = params * spatial
        flow = graph.flow_of(module_id)
        entries.append(
            LayerParams(
                layer_id=layer.id,
                module_id=module_id,
                flow=flow,
                kind=layer.kind,
                in_channels=layer.in_channels,
                out_channels=layer.out_channels,
                kernel=layer.kernel,
                params=params,
                filter_term=filter_term,
                mult_adds=mult_adds,
            )
        )
        per_module[module_id] = per_module.get(module_id, 0) + params
        per_flow[flow.value] = per_flow.get(flow.value, 0) + params
    return ParamReport(
        graph_name=graph.name,
        layers=tuple(entries),
        per_module=per_module,
        per_flow=per_flow,
        total=sum(x.params for x in entries),
        mult_adds=sum(x.mult_adds for x in entries),
    )

