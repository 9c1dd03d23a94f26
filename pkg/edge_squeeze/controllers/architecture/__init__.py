"""ArchitectureController: builds, squeezes, describes and stores architecture graphs."""
from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, List, Optional, Tuple, Union

from edge_squeeze.constants import PARAM_TARGET, PARAM_TOLERANCE
from edge_squeeze.helpers.tables import aligned_table
from edge_squeeze.models.architecture import HEAD_MODULE_ID, ArchGraph, LedgerEntry, ParamReport
from edge_squeeze.models.enums import Flow
from edge_squeeze.models.errors import ConfigError

from .builders import build_toy_baseline, build_xception_baseline
from .inference import count_params, validate
from .pipeline import build_proposed, build_toy, calibrate_middle_width, squeeze_ledger
from .serialization import graph_from_text, graph_hash, graph_to_text

if TYPE_CHECKING:
    from edge_squeeze.toolkit import EdgeSqueeze

VARIANT_BASELINE = "baseline"
VARIANT_PROPOSED = "proposed"
VARIANT_TOY = "toy"


class ArchitectureController:
    """Builds the baseline and squeezed graphs and reports on them."""

    def __init__(self, toolkit: EdgeSqueeze):
        """Initialize class."""
        self.toolkit = toolkit
        self.logger = toolkit.logger.getChild("arch")
        self._calibration: Optional[Tuple[int, int]] = None

    @property
    def config(self):
        """Return the architecture config."""
        return self.toolkit.config.arch

    def calibration(self) -> Tuple[int, int]:
        """Return the calibrated (middle width, total) of the squeezed model."""
        if self._calibration is None:
            self._calibration = calibrate_middle_width(
                build_xception_baseline(self.toolkit.config.train.dropout_rate)
            )
        return self._calibration

    def build(self, variant: Optional[str] = None) -> ArchGraph:
        """Build the graph of a variant (defaults to the configured one)."""
        variant = variant or self.config.variant
        dropout_rate = self.toolkit.config.train.dropout_rate
        if variant == VARIANT_BASELINE:
            graph = build_xception_baseline(dropout_rate)
        elif variant == VARIANT_PROPOSED:
            graph = build_proposed(self.calibration()[0], dropout_rate)
        elif variant == VARIANT_TOY:
            graph = build_toy(
                self.config.toy_width_divisor, self.config.toy_input_size, dropout_rate
            )
        else:
            raise ConfigError(f"Unknown architecture variant: {variant}")
        validate(graph)
        self.logger.debug("Built %s graph with %s modules", graph.name, len(graph.modules))
        return graph

    def baseline_for(self, variant: Optional[str] = None) -> ArchGraph:
        """Return the unsqueezed graph the variant starts from."""
        variant = variant or self.config.variant
        dropout_rate = self.toolkit.config.train.dropout_rate
        if variant == VARIANT_TOY:
            return build_toy_baseline(
                self.config.toy_width_divisor, self.config.toy_input_size, dropout_rate
            )
        return build_xception_baseline(dropout_rate)

    def ledger(self, variant: Optional[str] = None) -> List[LedgerEntry]:
        """Return the pass-by-pass parameter ledger of the squeeze pipeline."""
        variant = variant or self.config.variant
        if variant == VARIANT_TOY:
            squeezed = self.build(VARIANT_TOY)
            width = squeezed.modules_in(Flow.MIDDLE)[0].out_channels
        else:
            width = self.calibration()[0]
        return squeeze_ledger(self.baseline_for(variant), width)

    def describe(self, graph: ArchGraph) -> str:
        """Return the parameter report of a graph, one row per module and the head below."""
        report = count_params(graph)

        def summary(module_id: str) -> Tuple[int, int, int]:
            entries = [x for x in report.layers if x.module_id == module_id]
            return (
                len(entries),
                sum(x.filter_term for x in entries),
                sum(x.mult_adds for x in entries),
            )

        rows = [
            (module.id, module.flow.value, *summary(module.id), report.per_module[module.id])
            for module in graph.modules
        ]
        table = aligned_table(
            ("module", "flow", "layers", "filter term", "mult-adds", "params"),
            rows,
            footer=("total", "", len(report.layers), "", report.mult_adds, report.total),
        )
        head_mult_adds = summary(HEAD_MODULE_ID)[2]
        head = (
            f"head: {report.per_module.get(HEAD_MODULE_ID, 0):,} parameters, "
            f"{head_mult_adds:,} mult-adds"
        )
        flows = ", ".join(f"{flow} {total:,}" for flow, total in report.per_flow.items())
        lines = [f"graph {graph.name} ({graph_hash(graph)[:12]})", table.rstrip(), head, flows]
        if graph.name == VARIANT_PROPOSED:
            width, total = self.calibration()
            lines.append(
                f"calibrated middle flow width {width}: {total:,} parameters "
                f"(target {PARAM_TARGET:,} +/- {PARAM_TOLERANCE:.0%})"
            )
        return "\n".join(lines) + "\n"

    def describe_ledger(self, ledger: List[LedgerEntry]) -> str:
        """Return the ledger as an aligned text table."""
        return aligned_table(
            ("step", "params", "change"), [(x.step, x.total, x.delta) for x in ledger]
        )

    @staticmethod
    def count_params(graph: ArchGraph) -> ParamReport:
        """Return the parameter report of a graph."""
        return count_params(graph)

    @staticmethod
    def graph_hash(graph: ArchGraph) -> str:
        """Return the content hash of a graph."""
        return graph_hash(graph)

    def save_graph(self, graph: ArchGraph, path: Union[str, Path]) -> str:
        """Write the graph text format, returns the graph hash."""
        Path(path).write_text(graph_to_text(graph), encoding="utf-8")
        self.logger.debug("Wrote graph %s to %s", graph.name, path)
        return graph_hash(graph)

    @staticmethod
    def load_graph(path: Union[str, Path]) -> ArchGraph:
        """Read a graph from its text format."""
        return graph_from_text(Path(path).read_text(encoding="utf-8"))
