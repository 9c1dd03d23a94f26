"""Materialize an architecture graph into a trainable model."""
from __future__ import annotations

from typing import Dict

import numpy as np

from edge_squeeze.controllers.architecture.inference import validate
from edge_squeeze.controllers.architecture.serialization import graph_hash
from edge_squeeze.models.architecture import ArchGraph, LayerSpec
from edge_squeeze.models.enums import LayerKind
from edge_squeeze.models.errors import CompileError, GraphValidationError
from edge_squeeze.models.model import SUPPORTED_KINDS, Model, buffer_names, param_names
from edge_squeeze.tensor.tensor import Tensor

PARAM_DTYPE = np.float32


def _he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Variance scaling init for rectified nets: N(0, 2 / fan_in)."""
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(PARAM_DTYPE)


def _init_layer(layer: LayerSpec, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    """Return the initial parameter arrays of one layer by name."""
    names = param_names(layer)
    if layer.kind == LayerKind.CONV:
        kh, kw = layer.kernel
        shape = (layer.out_channels, layer.in_channels, kh, kw)
        return {names["weight"]: _he_normal(rng, shape, layer.in_channels * kh * kw)}
    if layer.kind == LayerKind.SEPARABLE_CONV:
        kh, kw = layer.kernel
        return {
            names["depthwise"]: _he_normal(rng, (layer.in_channels, 1, kh, kw), kh * kw),
            names["pointwise"]: _he_normal(
                rng, (layer.out_channels, layer.in_channels, 1, 1), layer.in_channels
            ),
        }
    if layer.kind == LayerKind.BATCHNORM:
        return {
            names["gamma"]: np.ones(layer.out_channels, dtype=PARAM_DTYPE),
            names["beta"]: np.zeros(layer.out_channels, dtype=PARAM_DTYPE),
        }
    if layer.kind == LayerKind.DENSE:
        return {
            names["weight"]: _he_normal(
                rng, (layer.in_channels, layer.out_channels), layer.in_channels
            ),
            names["bias"]: np.zeros(layer.out_channels, dtype=PARAM_DTYPE),
        }
    return {}


def compile_graph(graph: ArchGraph, seed: int) -> Model:
    """
    Compile a graph into a model with parameters drawn deterministically from seed.

    The seed is split into one stream for initialization and one for dropout.
    """
    for module_id, layer in graph.iter_layers():
        if not isinstance(layer.kind, LayerKind) or layer.kind not in SUPPORTED_KINDS:
            raise CompileError(
                f"Layer {layer.id} in {module_id} has unsupported kind {layer.kind!r}"
            )
    try:
        validate(graph)
    except GraphValidationError as err:
        raise CompileError(f"Can not compile invalid graph {graph.name}: {err}") from err
    init_seq, dropout_seq = np.random.SeedSequence(seed).spawn(2)
    init_rng = np.random.Generator(np.random.PCG64(init_seq))
    params: Dict[str, Tensor] = {}
    buffers: Dict[str, np.ndarray] = {}
    for _, layer in graph.iter_layers():
        for name, value in _init_layer(layer, init_rng).items():
            params[name] = Tensor(value, requires_grad=True, name=name, dtype=PARAM_DTYPE)
        names = buffer_names(layer)
        if names:
            buffers[names["mean"]] = np.zeros(layer.out_channels, dtype=PARAM_DTYPE)
            buffers[names["var"]] = np.ones(layer.out_channels, dtype=PARAM_DTYPE)
    return Model(
        graph=graph,
        graph_hash=graph_hash(graph),
        params=params,
        buffers=buffers,
        rng=np.random.Generator(np.random.PCG64(dropout_seq)),
    )
