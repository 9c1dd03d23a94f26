"""Models and helpers for the architecture graph."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Optional, Tuple

from mashumaro import DataClassDictMixin

from edge_squeeze.models.enums import Flow, LayerKind, LayerRole, Padding

ChannelShape = Tuple[int, ...]

HEAD_MODULE_ID = "head"


@dataclass(frozen=True)
class LayerSpec(DataClassDictMixin):
    """A single layer of the architecture graph."""

    id: str
    kind: LayerKind
    in_channels: Optional[int] = None
    out_channels: Optional[int] = None
    kernel: Optional[Tuple[int, int]] = None
    stride: int = 1
    padding: Padding = Padding.SAME
    role: Optional[LayerRole] = None
    rate: Optional[float] = None

    def with_changes(self, **changes) -> "LayerSpec":
        """Return a copy with the given fields replaced."""
        return replace(self, **changes)


@dataclass(frozen=True)
class ResidualLink(DataClassDictMixin):
    """Shortcut around a module, optionally through a projection."""

    module_id: str
    projection: Tuple[LayerSpec, ...] = ()

    @property
    def source(self) -> str:
        """Return the module boundary the shortcut starts at."""
        return f"{self.module_id}.in"

    @property
    def target(self) -> str:
        """Return the module boundary the shortcut joins."""
        return f"{self.module_id}.out"


@dataclass(frozen=True)
class ArchModule(DataClassDictMixin):
    """An ordered group of layers within a flow."""

    id: str
    flow: Flow
    layers: Tuple[LayerSpec, ...]

    def conv_layers(self) -> List[LayerSpec]:
        """Return the conv-like layers in order."""
        return [x for x in self.layers if x.kind.is_conv_like()]

    def separable_layers(self) -> List[LayerSpec]:
        """Return the separable conv layers in order."""
        return [x for x in self.layers if x.kind == LayerKind.SEPARABLE_CONV]

    @property
    def out_channels(self) -> Optional[int]:
        """Return the channel width this module emits."""
        widths = [x.out_channels for x in self.conv_layers()]
        return widths[-1] if widths else None


@dataclass(frozen=True)
class ArchGraph(DataClassDictMixin):
    """Immutable module graph of an Xception-style classifier."""

    name: str
    input_shape: Tuple[int, int, int]
    modules: Tuple[ArchModule, ...]
    residual_links: Tuple[ResidualLink, ...] = ()
    head: Tuple[LayerSpec, ...] = ()
    applied_passes: Tuple[str, ...] = ()

    @property
    def flows(self) -> Tuple[Flow, ...]:
        """Return the flows in order of appearance."""
        flows: List[Flow] = []
        for module in self.modules:
            if module.flow not in flows:
                flows.append(module.flow)
        return tuple(flows)

    def modules_in(self, flow: Flow) -> List[ArchModule]:
        """Return the modules of a flow."""
        return [x for x in self.modules if x.flow == flow]

    def get_module(self, module_id: str) -> ArchModule:
        """Return module by id."""
        for module in self.modules:
            if module.id == module_id:
                return module
        raise KeyError(module_id)

    def residual_for(self, module_id: str) -> Optional[ResidualLink]:
        """Return the residual link around a module, if any."""
        return next((x for x in self.residual_links if x.module_id == module_id), None)

    def iter_layers(self) -> Iterator[Tuple[str, LayerSpec]]:
        """Yield (module id, layer) for every layer, projections after their module."""
        for module in self.modules:
            for layer in module.layers:
                yield module.id, layer
            if link := self.residual_for(module.id):
                for layer in link.projection:
                    yield module.id, layer
        for layer in self.head:
            yield HEAD_MODULE_ID, layer

    def flow_of(self, module_id: str) -> Flow:
        """Return the flow a module id belongs to."""
        if module_id == HEAD_MODULE_ID:
            return Flow.HEAD
        return self.get_module(module_id).flow

    def with_pass(self, pass_name: str, **changes) -> "ArchGraph":
        """Return a copy with changes applied and the pass recorded."""
        return replace(self, applied_passes=self.applied_passes + (pass_name,), **changes)


@dataclass(frozen=True)
class ShapeTable:
    """Result of shape inference over a graph."""

    layer_shapes: Dict[str, ChannelShape]
    boundaries: Dict[str, ChannelShape]
    output_shape: ChannelShape


@dataclass(frozen=True)
class LayerParams(DataClassDictMixin):
    """Parameter accounting of a single layer."""

    layer_id: str
    module_id: str
    flow: Flow
    kind: LayerKind
    in_channels: Optional[int]
    out_channels: Optional[int]
    kernel: Optional[Tuple[int, int]]
    params: int
    filter_term: int
    mult_adds: int


@dataclass(frozen=True)
class ParamReport(DataClassDictMixin):
    """Per layer, per module and per flow parameter totals of a graph."""

    graph_name: str
    layers: Tuple[LayerParams, ...]
    per_module: Dict[str, int] = field(default_factory=dict)
    per_flow: Dict[str, int] = field(default_factory=dict)
    total: int = 0
    mult_adds: int = 0

    def layer(self, layer_id: str) -> LayerParams:
        """Return the entry of a single layer."""
        for entry in self.layers:
            if entry.layer_id == layer_id:
                return entry
        raise KeyError(layer_id)


@dataclass(frozen=True)
class LedgerEntry(DataClassDictMixin):
    """Parameter total after one step of the squeeze pipeline."""

    step: str
    total: int
    delta: int
