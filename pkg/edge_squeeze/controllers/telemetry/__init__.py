"""TelemetryController: resource sampling during training and run comparison reports."""
from __future__ import annotations

import json
from contextlib import contextmanager
from pathlib import Path
from typing import TYPE_CHECKING, Iterator, List, Optional, Sequence, Union

from edge_squeeze.constants import REPORT_FILE, SUMMARY_FILE, TELEMETRY_FILE
from edge_squeeze.models.enums import EventType
from edge_squeeze.models.errors import EdgeSqueezeError
from edge_squeeze.models.event import ToolkitEvent
from edge_squeeze.models.telemetry import RunAggregate, RunSummary

from .aggregate import (
    aggregate,
    aggregate_csv,
    aggregate_table,
    compare_runs,
    read_samples,
    summary_row,
    write_samples,
)
from .probes import build_probes
from .sampler import Sampler

if TYPE_CHECKING:
    from edge_squeeze.toolkit import EdgeSqueeze

REPORT_CSV = "report.csv"


class TelemetryController:
    """Samples resources while training and turns runs into tables."""

    def __init__(self, toolkit: EdgeSqueeze):
        """Initialize class."""
        self.toolkit = toolkit
        self.logger = toolkit.logger.getChild("telemetry")

    @property
    def config(self):
        """Return the telemetry config."""
        return self.toolkit.config.telemetry

    def create_sampler(self, name: Optional[str] = None) -> Sampler:
        """Return a new (not started) sampler with the configured probes."""
        return Sampler(
            build_probes(self.config.probes),
            self.toolkit.config.train.telemetry_interval,
            name or self.toolkit.config.name,
        )

    @contextmanager
    def session(self, out_dir: Union[str, Path]) -> Iterator[Optional[Sampler]]:
        """
        Sample for the duration of the block, tagging samples by the epoch events.

        Writes telemetry.csv and the per-epoch report.txt into out_dir afterwards.
        """
        if not self.config.enabled:
            yield None
            return
        sampler = self.create_sampler()

        def on_epoch(event: ToolkitEvent) -> None:
            sampler.mark_epoch(event.data)

        remove_listener = self.toolkit.subscribe(on_epoch, EventType.EPOCH_STARTED)
        sampler.start()
        try:
            yield sampler
        finally:
            remove_listener()
            run = sampler.stop()
            out_dir = Path(out_dir)
            write_samples(run, out_dir / TELEMETRY_FILE)
            if run.samples:
                result = aggregate(run)
                (out_dir / REPORT_FILE).write_text(aggregate_table(result), encoding="utf-8")
                self.logger.info(
                    "Collected %s samples, avg memory %.4f GB",
                    len(run.samples),
                    result.total.avg_mem_gb,
                )

    def load_run(self, run_dir: Union[str, Path]) -> RunSummary:
        """Return the comparison row of a run directory."""
        run_dir = Path(run_dir)
        summary = None
        usage: Optional[RunAggregate] = None
        if (run_dir / SUMMARY_FILE).is_file():
            summary = json.loads((run_dir / SUMMARY_FILE).read_text(encoding="utf-8"))
        if (run_dir / TELEMETRY_FILE).is_file():
            run = read_samples(run_dir / TELEMETRY_FILE)
            usage = aggregate(run) if run.samples else None
        if summary is None and usage is None:
            raise EdgeSqueezeError(f"{run_dir} holds no training summary or telemetry")
        name = (summary or {}).get("name") or run_dir.name
        return summary_row(name, summary, usage)

    def report(self, run_dirs: Sequence[Union[str, Path]], out_dir: Union[str, Path]) -> str:
        """Write report.csv and report.txt comparing runs, return the text table."""
        rows: List[RunSummary] = [self.load_run(x) for x in run_dirs]
        csv_body, text = compare_runs(rows)
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / REPORT_CSV).write_text(csv_body, encoding="utf-8")
        (out_dir / REPORT_FILE).write_text(text, encoding="utf-8")
        self.logger.debug("Compared %s runs into %s", len(rows), out_dir)
        return text

    @staticmethod
    def aggregate_csv(run_dir: Union[str, Path]) -> str:
        """Recompute the per-epoch aggregate CSV of a run from its samples."""
        return aggregate_csv(aggregate(read_samples(Path(run_dir) / TELEMETRY_FILE)))
