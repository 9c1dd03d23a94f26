"""Models for the per-epoch training history."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

from mashumaro import DataClassDictMixin

from edge_squeeze.helpers.tables import csv_text
from edge_squeeze.helpers.util import try_parse_float
from edge_squeeze.models.errors import EdgeSqueezeError

HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc", "seconds")


@dataclass(frozen=True)
class EpochRecord(DataClassDictMixin):
    """Metrics of one completed epoch (epochs count from 1)."""

    epoch: int
    train_loss: float
    train_acc: float
    val_loss: Optional[float] = None
    val_acc: Optional[float] = None
    seconds: float = 0.0

    def as_row(self) -> list:
        """Return the CSV row of this record."""
        return [getattr(self, x) for x in HISTORY_COLUMNS]


@dataclass
class TrainHistory(DataClassDictMixin):
    """One record per completed epoch, in epoch order."""

    records: List[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        """Return number of completed epochs."""
        return len(self.records)

    def append(self, record: EpochRecord) -> None:
        """Add the record of the next epoch."""
        expected = len(self.records) + 1
        if record.epoch != expected:
            raise ValueError(f"Expected the record of epoch {expected}, got {record.epoch}")
        self.records.append(record)

    @property
    def last(self) -> Optional[EpochRecord]:
        """Return the record of the latest epoch."""
        return self.records[-1] if self.records else None

    @property
    def avg_seconds(self) -> Optional[float]:
        """Return the average wall-clock seconds per epoch."""
        if not self.records:
            return None
        return sum(x.seconds for x in self.records) / len(self.records)

    def truncated(self, epochs: int) -> "TrainHistory":
        """Return the history of the first epochs only."""
        return TrainHistory(self.records[:epochs])

    def to_csv(self) -> str:
        """Return the metrics CSV text."""
        return csv_text(HISTORY_COLUMNS, [x.as_row() for x in self.records])

    @classmethod
    def from_csv(cls, text: str) -> "TrainHistory":
        """Parse metrics CSV text."""
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != HISTORY_COLUMNS:
            raise EdgeSqueezeError(f"Unexpected metrics columns: {reader.fieldnames}")
        history = cls()
        try:
            for row in reader:
                history.append(
                    EpochRecord(
                        epoch=int(row["epoch"]),
                        train_loss=float(row["train_loss"]),
                        train_acc=float(row["train_acc"]),
                        val_loss=try_parse_float(row["val_loss"], None),
                        val_acc=try_parse_float(row["val_acc"], None),
                        seconds=float(row["seconds"]),
                    )
                )
        except (TypeError, ValueError) as err:
            raise EdgeSqueezeError(f"Malformed metrics row: {err}") from err
        return history


def emit_history(history: TrainHistory, path: Union[str, Path]) -> Path:
    """Write the metrics CSV of a history."""
    if not history.records:
        raise EdgeSqueezeError("Can not emit an empty training history")
    path = Path(path)
    try:
        path.write_text(history.to_csv(), encoding="utf-8")
    except OSError as err:
        raise EdgeSqueezeError(f"Can not write metrics to {path}: {err}") from err
    return path


def read_history(path: Union[str, Path]) -> TrainHistory:
    """Read a metrics CSV, a missing file is an empty history."""
    path = Path(path)
    if not path.is_file():
        return TrainHistory()
    return TrainHistory.from_csv(path.read_text(encoding="utf-8"))
