"""RuntimeController: compiles graphs into models and owns checkpoints."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, Optional, Tuple, Union

import numpy as np

from edge_squeeze.controllers.architecture.serialization import (
    graph_from_text,
    graph_hash,
    graph_to_text,
)
from edge_squeeze.models.architecture import ArchGraph
from edge_squeeze.models.errors import (
    CorruptCheckpointError,
    GraphHashMismatchError,
    GraphValidationError,
)
from edge_squeeze.models.model import Model, buffer_names, param_names
from edge_squeeze.tensor.optim import Adam
from edge_squeeze.tensor.tensor import Tensor

from .checkpoint import (
    GROUP_ADAM_M,
    GROUP_ADAM_V,
    GROUP_BUFFER,
    GROUP_PARAM,
    CheckpointData,
    encode_checkpoint,
    optimizer_groups,
    read_checkpoint,
    write_checkpoint,
)
from .compiler import compile_graph

if TYPE_CHECKING:
    from edge_squeeze.toolkit import EdgeSqueeze


@dataclass
class CheckpointState:
    """Training state restored next to the model."""

    epoch: int = 0
    optimizer: Optional[dict] = None
    extra: Dict[str, Any] = field(default_factory=dict)


def _expected_names(graph: ArchGraph) -> Tuple[list, list]:
    params, buffers = [], []
    for _, layer in graph.iter_layers():
        params += list(param_names(layer).values())
        buffers += list(buffer_names(layer).values())
    return params, buffers


def _check_names(group: str, found: Dict[str, np.ndarray], expected: list) -> None:
    if sorted(found) != sorted(expected):
        missing = sorted(set(expected) - set(found))
        unexpected = sorted(set(found) - set(expected))
        raise CorruptCheckpointError(
            f"Checkpoint {group} blobs do not match the graph "
            f"(missing: {missing[:3]}, unexpected: {unexpected[:3]})"
        )


def checkpoint_bytes(
    model: Model,
    optimizer: Optional[Adam] = None,
    epoch: int = 0,
    extra: Optional[Dict[str, Any]] = None,
) -> bytes:
    """Return the encoded checkpoint of a model and its training state."""
    header: Dict[str, Any] = {
        "graph_hash": model.graph_hash,
        "graph": graph_to_text(model.graph),
        "epoch": epoch,
        "rng": {"dropout": model.rng.bit_generator.state},
        "optimizer": None,
        "extra": extra or {},
    }
    state = optimizer.state_dict() if optimizer else None
    if optimizer:
        header["optimizer"] = {
            "step": state["step"],
            "lr": optimizer.lr,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "epsilon": optimizer.epsilon,
        }
    groups = {
        GROUP_PARAM: {name: tensor.data for name, tensor in model.params.items()},
        GROUP_BUFFER: model.buffers,
        **optimizer_groups(state),
    }
    return encode_checkpoint(header, groups)


def model_from_checkpoint(
    data: CheckpointData, graph: Optional[ArchGraph] = None
) -> Tuple[Model, CheckpointState]:
    """Rebuild a model and its training state from decoded checkpoint data."""
    header = data.header
    try:
        stored = graph_from_text(header["graph"])
    except (KeyError, GraphValidationError) as err:
        raise CorruptCheckpointError(f"Checkpoint graph is unreadable: {err}") from err
    if graph_hash(stored) != header.get("graph_hash"):
        raise CorruptCheckpointError("Checkpoint graph text does not match its hash")
    if graph is not None and graph_hash(graph) != header["graph_hash"]:
        raise GraphHashMismatchError(
            f"Checkpoint was written for graph {stored.name} ({header['graph_hash'][:12]}), "
            f"not for {graph.name} ({graph_hash(graph)[:12]})"
        )
    expected_params, expected_buffers = _expected_names(stored)
    _check_names(GROUP_PARAM, data.group(GROUP_PARAM), expected_params)
    _check_names(GROUP_BUFFER, data.group(GROUP_BUFFER), expected_buffers)
    params = {
        name: Tensor(
            data.group(GROUP_PARAM)[name], requires_grad=True, name=name, dtype=np.float32
        )
        for name in expected_params
    }
    buffers = {name: data.group(GROUP_BUFFER)[name].copy() for name in expected_buffers}
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = header["rng"]["dropout"]
    model = Model(stored, header["graph_hash"], params, buffers, rng)
    optimizer = None
    if header.get("optimizer"):
        optimizer = {
            **header["optimizer"],
            "m": data.group(GROUP_ADAM_M),
            "v": data.group(GROUP_ADAM_V),
        }
    return model, CheckpointState(int(header["epoch"]), optimizer, header.get("extra") or {})


class RuntimeController:
    """Compiles graphs and saves/loads model checkpoints."""

    def __init__(self, toolkit: EdgeSqueeze):
        """Initialize class."""
        self.toolkit = toolkit
        self.logger = toolkit.logger.getChild("runtime")

    def compile(self, graph: ArchGraph, seed: Optional[int] = None) -> Model:
        """Compile a graph, seeded from the run seed by default."""
        seed = self.toolkit.config.train.seed if seed is None else seed
        model = compile_graph(graph, seed)
        self.logger.info(
            "Compiled %s with %s trainable parameters (seed %s)",
            graph.name,
            f"{model.num_parameters:,}",
            seed,
        )
        return model

    def save_checkpoint(
        self,
        model: Model,
        path: Union[str, Path],
        optimizer: Optional[Adam] = None,
        epoch: int = 0,
        extra: Optional[Dict[str, Any]] = None,
    ) -> None:
        """Write a checkpoint of model, optimizer state, epoch and rng state."""
        write_checkpoint(path, checkpoint_bytes(model, optimizer, epoch, extra))
        self.logger.debug("Saved checkpoint of epoch %s to %s", epoch, path)

    def load_checkpoint(
        self, path: Union[str, Path], graph: Optional[ArchGraph] = None
    ) -> Tuple[Model, CheckpointState]:
        """Load a model and its training state, optionally checking the expected graph."""
        model, state = model_from_checkpoint(read_checkpoint(path), graph)
        self.logger.debug("Loaded checkpoint %s (epoch %s)", path, state.epoch)
        return model, state

    def load_weights(self, model: Model, path: Union[str, Path]) -> Model:
        """Copy parameters and buffers of a checkpoint into a model of the same graph."""
        loaded, _ = self.load_checkpoint(path, model.graph)
        for name, tensor in loaded.params.items():
            model.params[name].data[...] = tensor.data
        for name, buffer in loaded.buffers.items():
            model.buffers[name][...] = buffer
        self.logger.info("Loaded weights for %s from %s", model.graph.name, path)
        return model

