"""Aggregation of telemetry runs into per-epoch and cross-run tables."""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from edge_squeeze.helpers.tables import aligned_table, csv_text
from edge_squeeze.helpers.util import try_parse_float, try_parse_int
from edge_squeeze.models.errors import SamplerError
from edge_squeeze.models.telemetry import (
    EpochMark,
    RunAggregate,
    RunSummary,
    TelemetryRun,
    TelemetrySample,
    UsageAggregate,
)

SAMPLE_COLUMNS = ("t", "mem_gb", "util_pct", "power_w", "epoch")
MARK_COLUMNS = ("epoch", "t")
STOP_MARK = "stop"
AGGREGATE_COLUMNS = (
    "epoch",
    "samples",
    "avg_mem_gb",
    "max_mem_gb",
    "avg_util_pct",
    "avg_power_w",
    "seconds",
)
COMPARE_COLUMNS = (
    "model",
    "params",
    "train_acc",
    "test_acc",
    "avg_time_epoch_s",
    "avg_mem_gb",
    "avg_gpu_pct",
    "avg_power_w",
)
NO_EPOCH = "-"


def _mean(values: Sequence[Optional[float]]) -> Optional[float]:
    """Return the mean of the present values, None when all are absent."""
    present = [x for x in values if x is not None]
    return sum(present) / len(present) if present else None


def _usage(label: str, samples: Sequence[TelemetrySample], seconds=None) -> UsageAggregate:
    return UsageAggregate(
        label=label,
        samples=len(samples),
        avg_mem_gb=sum(x.mem_gb for x in samples) / len(samples),
        max_mem_gb=max(x.mem_gb for x in samples),
        avg_util_pct=_mean([x.util_pct for x in samples]),
        avg_power_w=_mean([x.power_w for x in samples]),
        seconds=seconds,
    )


def aggregate(run: TelemetryRun) -> RunAggregate:
    """
    Return per-epoch averages and the whole-run averages of a run.

    Samples taken before the first epoch mark form their own '-' row, so the
    whole-run averages are the sample weighted means of the rows.
    """
    if not run.samples:
        raise SamplerError(f"Telemetry run {run.name} has no samples")
    groups: Dict[Optional[int], List[TelemetrySample]] = defaultdict(list)
    for sample in run.samples:
        groups[sample.epoch].append(sample)
    durations = run.epoch_durations()
    rows = []
    if None in groups:
        rows.append(_usage(NO_EPOCH, groups.pop(None)))
    for epoch in sorted(groups):
        rows.append(_usage(str(epoch), groups[epoch], durations.get(epoch)))
    total = _usage("all", run.samples, sum(durations.values()) if durations else None)
    return RunAggregate(
        name=run.name,
        epochs=tuple(rows),
        total=total,
        avg_epoch_seconds=_mean(list(durations.values())),
    )


def _aggregate_rows(result: RunAggregate) -> List[list]:
    return [
        [
            row.label,
            row.samples,
            row.avg_mem_gb,
            row.max_mem_gb,
            row.avg_util_pct,
            row.avg_power_w,
            row.seconds,
        ]
        for row in (*result.epochs, result.total)
    ]


def aggregate_csv(result: RunAggregate) -> str:
    """Return the aggregate as CSV, 4 decimals, empty cells for absent probes."""
    rows = [
        [f"{x:.4f}" if isinstance(x, float) else x for x in row]
        for row in _aggregate_rows(result)
    ]
    return csv_text(AGGREGATE_COLUMNS, rows)


def aggregate_table(result: RunAggregate) -> str:
    """Return the aggregate as an aligned text table with the whole-run row as footer."""
    rows = _aggregate_rows(result)
    return f"{result.name}\n" + aligned_table(AGGREGATE_COLUMNS, rows[:-1], footer=rows[-1])


def summary_row(
    name: str,
    summary: Optional[dict] = None,
    usage: Optional[RunAggregate] = None,
) -> RunSummary:
    """Combine the training summary and the telemetry aggregate of one run."""
    summary = summary or {}
    seconds = usage.avg_epoch_seconds if usage else None
    if seconds is None:
        seconds = summary.get("avg_epoch_seconds")
    return RunSummary(
        name=name,
        params=summary.get("params"),
        train_acc=summary.get("train_acc"),
        test_acc=summary.get("test_acc"),
        avg_epoch_seconds=seconds,
        avg_mem_gb=usage.total.avg_mem_gb if usage else None,
        avg_util_pct=usage.total.avg_util_pct if usage else None,
        avg_power_w=usage.total.avg_power_w if usage else None,
    )


def compare_runs(runs: Sequence[RunSummary]) -> Tuple[str, str]:
    """Return (csv, aligned text) with one row per run, ordered by run name."""
    rows = [
        [
            run.name,
            run.params,
            run.train_acc,
            run.test_acc,
            run.avg_epoch_seconds,
            run.avg_mem_gb,
            run.avg_util_pct,
            run.avg_power_w,
        ]
        for run in sorted(runs, key=lambda x: x.name)
    ]
    csv_rows = [[f"{x:.4f}" if isinstance(x, float) else x for x in row] for row in rows]
    return csv_text(COMPARE_COLUMNS, csv_rows), aligned_table(COMPARE_COLUMNS, rows)


def samples_csv(run: TelemetryRun) -> str:
    """Return the samples CSV text."""
    return csv_text(
        SAMPLE_COLUMNS,
        [[x.t, x.mem_gb, x.util_pct, x.power_w, x.epoch] for x in run.samples],
    )


def marks_csv(run: TelemetryRun) -> str:
    """Return the epoch marks CSV text, the stop time is the last row."""
    rows = [[x.epoch, x.t] for x in run.marks]
    if run.stopped_at is not None:
        rows.append([STOP_MARK, run.stopped_at])
    return csv_text(MARK_COLUMNS, rows)


def marks_path(samples_path: Union[str, Path]) -> Path:
    """Return the marks file stored next to a samples file."""
    samples_path = Path(samples_path)
    return samples_path.with_name(f"{samples_path.stem}_marks.csv")


def write_samples(run: TelemetryRun, path: Union[str, Path]) -> Path:
    """Write the samples CSV of a run and its epoch marks next to it."""
    path = Path(path)
    path.write_text(samples_csv(run), encoding="utf-8")
    marks_path(path).write_text(marks_csv(run), encoding="utf-8")
    return path


def _read_marks(path: Path) -> Tuple[List[EpochMark], Optional[float]]:
    if not path.is_file():
        return [], None
    reader = csv.DictReader(io.StringIO(path.read_text(encoding="utf-8")))
    if tuple(reader.fieldnames or ()) != MARK_COLUMNS:
        raise SamplerError(f"{path} is not a telemetry marks file")
    marks, stopped_at = [], None
    try:
        for row in reader:
            if row["epoch"] == STOP_MARK:
                stopped_at = float(row["t"])
            else:
                marks.append(EpochMark(int(row["epoch"]), float(row["t"])))
    except (TypeError, ValueError) as err:
        raise SamplerError(f"Malformed telemetry mark in {path}: {err}") from err
    return marks, stopped_at


def read_samples(path: Union[str, Path], name: Optional[str] = None) -> TelemetryRun:
    """Read a samples CSV (and its epoch marks when present) back into a run."""
    path = Path(path)
    reader = csv.DictReader(io.StringIO(path.read_text(encoding="utf-8")))
    if tuple(reader.fieldnames or ()) != SAMPLE_COLUMNS:
        raise SamplerError(f"{path} is not a telemetry samples file")
    samples = []
    try:
        for row in reader:
            samples.append(
                TelemetrySample(
                    t=float(row["t"]),
                    mem_gb=float(row["mem_gb"]),
                    util_pct=try_parse_float(row["util_pct"], None),
                    power_w=try_parse_float(row["power_w"], None),
                    epoch=try_parse_int(row["epoch"], None) if row["epoch"] else None,
                )
            )
    except (TypeError, ValueError) as err:
        raise SamplerError(f"Malformed telemetry sample in {path}: {err}") from err
    marks, stopped_at = _read_marks(marks_path(path))
    return TelemetryRun(
        name=name or path.parent.name, samples=samples, marks=marks, stopped_at=stopped_at
    )
