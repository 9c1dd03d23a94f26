"""Line based text format of architecture graphs with a stable content hash."""
from __future__ import annotations

import json
from typing import Dict, List

from mashumaro.exceptions import InvalidFieldValue, MissingField

from edge_squeeze.helpers.json import content_digest, json_lines
from edge_squeeze.models.architecture import (
    HEAD_MODULE_ID,
    ArchGraph,
    ArchModule,
    LayerSpec,
    ResidualLink,
)
from edge_squeeze.models.enums import Flow
from edge_squeeze.models.errors import GraphValidationError

PART_BODY = "body"
PART_PROJECTION = "projection"
PART_HEAD = "head"


def _layer_record(module_id: str, part: str, layer: LayerSpec) -> dict:
    return {"record": "layer", "module": module_id, "part": part, **layer.to_dict()}


def graph_to_text(graph: ArchGraph) -> str:
    """Return the canonical text of a graph: one record per line."""
    records: List[dict] = [
        {
            "record": "graph",
            "name": graph.name,
            "input_shape": list(graph.input_shape),
            "applied_passes": list(graph.applied_passes),
        }
    ]
    for module in graph.modules:
        records.append({"record": "module", "id": module.id, "flow": module.flow.value})
        records += [_layer_record(module.id, PART_BODY, x) for x in module.layers]
        if link := graph.residual_for(module.id):
            records.append(
                {
                    "record": "residual",
                    "module": module.id,
                    "source": link.source,
                    "target": link.target,
                }
            )
            records += [_layer_record(module.id, PART_PROJECTION, x) for x in link.projection]
    records += [_layer_record(HEAD_MODULE_ID, PART_HEAD, x) for x in graph.head]
    return json_lines(records)


def graph_hash(graph: ArchGraph) -> str:
    """Return the sha256 of the canonical graph text."""
    return content_digest(graph_to_text(graph))


def graph_from_text(text: str) -> ArchGraph:
    """Parse a graph from its text format."""
    header = None
    modules: Dict[str, dict] = {}
    residuals: Dict[str, List[LayerSpec]] = {}
    head: List[LayerSpec] = []
    try:
        for line_no, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            record = json.loads(line)
            kind = record.pop("record")
            if kind == "graph":
                header = record
            elif kind == "module":
                modules[record["id"]] = {"flow": Flow(record["flow"]), "layers": []}
            elif kind == "residual":
                residuals[record["module"]] = []
            elif kind == "layer":
                module_id, part = record.pop("module"), record.pop("part")
                layer = LayerSpec.from_dict(record)
                if part == PART_HEAD:
                    head.append(layer)
                elif part == PART_PROJECTION:
                    residuals[module_id].append(layer)
                else:
                    modules[module_id]["layers"].append(layer)
            else:
                raise GraphValidationError(f"Unknown record type {kind} on line {line_no}")
    except (KeyError, ValueError, TypeError, InvalidFieldValue, MissingField) as err:
        raise GraphValidationError(f"Malformed graph text: {err}") from err
    if header is None:
        raise GraphValidationError("Graph text has no graph record")
    return ArchGraph(
        name=header["name"],
        input_shape=tuple(header["input_shape"]),
        modules=tuple(
            ArchModule(module_id, x["flow"], tuple(x["layers"])) for module_id, x in modules.items()
        ),
        residual_links=tuple(
            ResidualLink(module_id, tuple(layers)) for module_id, layers in residuals.items()
        ),
        head=tuple(head),
        applied_passes=tuple(header["applied_passes"]),
    )
