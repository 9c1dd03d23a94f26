"""Executable model compiled from an architecture graph."""
from __future__ import annotations

from typing import Dict, Optional

import numpy as np

from edge_squeeze.constants import MAXPOOL_WINDOW
from edge_squeeze.models.architecture import ArchGraph, LayerSpec
from edge_squeeze.models.enums import LayerKind, Mode
from edge_squeeze.models.errors import ShapeError
from edge_squeeze.tensor import ops
from edge_squeeze.tensor.tensor import Tensor, no_grad

SUPPORTED_KINDS = tuple(LayerKind)


def param_names(layer: LayerSpec) -> Dict[str, str]:
    """Return the trainable tensor names of a layer keyed by their role."""
    if layer.kind == LayerKind.CONV:
        return {"weight": f"{layer.id}.weight"}
    if layer.kind == LayerKind.SEPARABLE_CONV:
        return {"depthwise": f"{layer.id}.depthwise", "pointwise": f"{layer.id}.pointwise"}
    if layer.kind == LayerKind.BATCHNORM:
        return {"gamma": f"{layer.id}.gamma", "beta": f"{layer.id}.beta"}
    if layer.kind == LayerKind.DENSE:
        return {"weight": f"{layer.id}.weight", "bias": f"{layer.id}.bias"}
    return {}


def buffer_names(layer: LayerSpec) -> Dict[str, str]:
    """Return the non-trainable state names of a layer."""
    if layer.kind == LayerKind.BATCHNORM:
        return {"mean": f"{layer.id}.running_mean", "var": f"{layer.id}.running_var"}
    return {}


class Model:
    """Trainable classifier: graph, named parameters, batchnorm buffers and a dropout rng."""

    def __init__(
        self,
        graph: ArchGraph,
        graph_hash: str,
        params: Dict[str, Tensor],
        buffers: Dict[str, np.ndarray],
        rng: np.random.Generator,
    ) -> None:
        """Initialize."""
        self.graph = graph
        self.graph_hash = graph_hash
        self.params = params
        self.buffers = buffers
        self.rng = rng
        self.mode = Mode.TRAIN

    @property
    def input_size(self) -> int:
        """Return the spatial input size the model expects."""
        return self.graph.input_shape[1]

    @property
    def num_parameters(self) -> int:
        """Return the number of trainable scalars."""
        return sum(x.size for x in self.params.values())

    def train(self) -> "Model":
        """Switch to train mode."""
        self.mode = Mode.TRAIN
        return self

    def eval(self) -> "Model":
        """Switch to eval mode."""
        self.mode = Mode.EVAL
        return self

    def _layer(self, layer: LayerSpec, x: Tensor, mode: Mode) -> Tensor:
        """Apply a single layer."""
        names = param_names(layer)
        kind = layer.kind
        if kind == LayerKind.CONV:
            return ops.conv2d(x, self.params[names["weight"]], layer.stride, layer.padding)
        if kind == LayerKind.SEPARABLE_CONV:
            return ops.separable_conv2d(
                x,
                self.params[names["depthwise"]],
                self.params[names["pointwise"]],
                layer.stride,
                layer.padding,
            )
        if kind == LayerKind.BATCHNORM:
            buffers = buffer_names(layer)
            return ops.batchnorm(
                x,
                self.params[names["gamma"]],
                self.params[names["beta"]],
                self.buffers[buffers["mean"]],
                self.buffers[buffers["var"]],
                mode,
            )
        if kind == LayerKind.RELU:
            return ops.relu(x)
        if kind == LayerKind.MAXPOOL:
            return ops.max_pool2d(x, MAXPOOL_WINDOW, layer.stride, layer.padding)
        if kind == LayerKind.GLOBAL_AVG_POOL:
            return ops.global_avg_pool(x)
        if kind == LayerKind.DROPOUT:
            return ops.dropout(x, layer.rate or 0.0, mode, self.rng)
        if kind == LayerKind.DENSE:
            return ops.dense(x, self.params[names["weight"]], self.params[names["bias"]])
        return ops.sigmoid(x)

    def forward(self, batch: Tensor, mode: Optional[Mode] = None) -> Tensor:
        """Return (B, 1) probabilities for a (B, C, H, W) batch (in the model mode by default)."""
        mode = mode or self.mode
        expected = tuple(self.graph.input_shape)
        if batch.ndim != 4 or batch.shape[1:] != expected:
            raise ShapeError(
                f"Model {self.graph.name} expects batches of shape (B, {expected[0]}, "
                f"{expected[1]}, {expected[2]}), got {batch.shape}"
            )
        x = batch
        for module in self.graph.modules:
            module_in = x
            for layer in module.layers:
                x = self._layer(layer, x, mode)
            if link := self.graph.residual_for(module.id):
                shortcut = module_in
                for layer in link.projection:
                    shortcut = self._layer(layer, shortcut, mode)
                x = ops.add(x, shortcut)
        for layer in self.graph.head:
            x = self._layer(layer, x, mode)
        return x

    __call__ = forward

    def predict(self, batch: np.ndarray, batch_size: Optional[int] = None) -> np.ndarray:
        """Return eval-mode probabilities for a (B, C, H, W) array, shape (B,)."""
        step = batch_size or len(batch)
        with no_grad():
            chunks = [
                self.forward(Tensor(batch[idx : idx + step]), Mode.EVAL).data.reshape(-1)
                for idx in range(0, len(batch), step)
            ]
        return np.concatenate(chunks)

    def zero_grad(self) -> None:
        """Clear all parameter gradients."""
        for tensor in self.params.values():
            tensor.zero_grad()
