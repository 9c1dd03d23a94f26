"""Models for grid based detection results and their scores."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Set, Tuple

from mashumaro import DataClassDictMixin

from edge_squeeze.helpers.geometry import Cell, Window
from edge_squeeze.helpers.tables import csv_text

REPORT_COLUMNS = ("row", "col", "prob", "decision")


@dataclass(frozen=True)
class CellPrediction(DataClassDictMixin):
    """Classifier output for one grid cell."""

    row: int
    col: int
    window: Window
    prob: float
    decision: int


@dataclass(frozen=True)
class DetectionReport(DataClassDictMixin):
    """Per-cell predictions of one image in row-major order."""

    image_id: str
    grid: Tuple[int, int]
    threshold: float
    cells: Tuple[CellPrediction, ...] = ()

    @property
    def positive_cells(self) -> Set[Cell]:
        """Return the (row, col) of cells decided defective."""
        return {(x.row, x.col) for x in self.cells if x.decision}

    @property
    def pseudo_boxes(self) -> List[Window]:
        """Return the pixel windows of the cells decided defective, one per cell."""
        return [x.window for x in self.cells if x.decision]

    def summary(self) -> str:
        """Return the one line summary."""
        return f"{len(self.cells)} cells, {len(self.pseudo_boxes)} positive"

    def to_csv(self) -> str:
        """Return the report as CSV, one cell per line."""
        return csv_text(
            REPORT_COLUMNS,
            [(x.row, x.col, f"{x.prob:.6f}", x.decision) for x in self.cells],
        )


@dataclass(frozen=True)
class DetectionScore(DataClassDictMixin):
    """Cell level agreement between predicted and truth-positive cells."""

    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0
    box_hits: Tuple[bool, ...] = field(default_factory=tuple)

    @property
    def boxes_hit(self) -> int:
        """Return number of truth boxes with at least one predicted cell."""
        return sum(self.box_hits)

    @property
    def precision(self) -> float:
        """Return TP / (TP + FP), 0 without predictions."""
        predicted = self.true_positives + self.false_positives
        return self.true_positives / predicted if predicted else 0.0

    @property
    def recall(self) -> float:
        """Return TP / (TP + FN), 0 without truth cells."""
        truth = self.true_positives + self.false_negatives
        return self.true_positives / truth if truth else 0.0
