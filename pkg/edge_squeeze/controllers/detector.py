"""DetectorController: grid tile classification over full board images."""
from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Iterable, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from PIL import Image, ImageDraw

from edge_squeeze.constants import PREDICTED_COLOR, STROKE_WIDTH, TRUTH_COLOR
from edge_squeeze.helpers.geometry import (
    BoxLike,
    defective_cells,
    grid_cells,
    overlap_fraction,
)
from edge_squeeze.helpers.images import crop_and_resize, open_image, to_chw_array
from edge_squeeze.helpers.tables import aligned_table, csv_text
from edge_squeeze.helpers.util import chunked
from edge_squeeze.models.dataset import HoldoutEntry
from edge_squeeze.models.detection import CellPrediction, DetectionReport, DetectionScore
from edge_squeeze.models.errors import DatasetError, EdgeSqueezeError

if TYPE_CHECKING:
    from edge_squeeze.toolkit import EdgeSqueeze

SCORE_COLUMNS = (
    "image",
    "classes",
    "cells",
    "positive",
    "tp",
    "fp",
    "fn",
    "boxes_hit",
    "boxes",
)


class Classifier(Protocol):
    """Anything that maps (B, 3, S, S) tiles to (B,) defect probabilities."""

    input_size: int

    def predict(self, batch: np.ndarray) -> np.ndarray:
        """Return probabilities."""


def detect(
    classifier: Classifier,
    img: Image.Image,
    grid: Tuple[int, int] = (10, 10),
    threshold: float = 0.5,
    image_id: str = "image",
    batch_size: int = 16,
) -> DetectionReport:
    """Classify every grid cell of an image, cells at or above threshold are positive."""
    cells = grid_cells(img.width, img.height, *grid)
    size = classifier.input_size
    probs: List[float] = []
    for chunk in chunked(cells, batch_size):
        batch = np.stack(
            [to_chw_array(crop_and_resize(img, cell.window, size), size) for cell in chunk]
        )
        probs += [float(x) for x in np.asarray(classifier.predict(batch)).reshape(-1)]
    return DetectionReport(
        image_id=image_id,
        grid=tuple(grid),
        threshold=threshold,
        cells=tuple(
            CellPrediction(cell.row, cell.col, cell.window, prob, int(prob >= threshold))
            for cell, prob in zip(cells, probs)
        ),
    )


def score(
    report: DetectionReport,
    width: int,
    height: int,
    truth: Sequence[BoxLike],
    overlap_threshold: float,
) -> DetectionScore:
    """
    Compare predicted cells with the truth-positive cells of the overlap rule.

    A truth box counts as hit when any of the cells it marks positive is predicted.
    """
    truth = list(truth)
    truth_cells = defective_cells(width, height, report.grid, truth, overlap_threshold)
    predicted = report.positive_cells
    windows = {(x.row, x.col): x.window for x in grid_cells(width, height, *report.grid)}
    hits = tuple(
        any(
            overlap_fraction(window, box) >= overlap_threshold and cell in predicted
            for cell, window in windows.items()
        )
        for box in truth
    )
    return DetectionScore(
        true_positives=len(predicted & truth_cells),
        false_positives=len(predicted - truth_cells),
        false_negatives=len(truth_cells - predicted),
        box_hits=hits,
    )


def _outline(draw: ImageDraw.ImageDraw, rect: Tuple[int, int, int, int], color) -> None:
    x0, y0, x1, y1 = rect
    draw.rectangle((x0, y0, max(x0, x1 - 1), max(y0, y1 - 1)), outline=color, width=STROKE_WIDTH)


def render(
    img: Image.Image,
    report: DetectionReport,
    truth: Iterable[BoxLike],
    path: Union[str, Path],
) -> Image.Image:
    """Draw predicted cells in red, then truth boxes in yellow, onto a copy saved as PNG."""
    canvas = img.convert("RGB").copy()
    draw = ImageDraw.Draw(canvas)
    for window in report.pseudo_boxes:
        _outline(draw, window.as_tuple(), PREDICTED_COLOR)
    for box in truth:
        rect = tuple(int(round(x)) for x in (box.x0, box.y0, box.x1, box.y1))
        _outline(draw, rect, TRUTH_COLOR)
    try:
        canvas.save(path, format="png")
    except OSError as err:
        raise EdgeSqueezeError(f"Can not write rendering to {path}: {err}") from err
    return canvas


def write_report(report: DetectionReport, path: Union[str, Path]) -> Path:
    """Write the per-cell report CSV."""
    path = Path(path)
    try:
        path.write_text(report.to_csv(), encoding="utf-8")
    except OSError as err:
        raise EdgeSqueezeError(f"Can not write report to {path}: {err}") from err
    return path


class DetectorController:
    """Runs detection, scoring and rendering with the configured grid."""

    def __init__(self, toolkit: EdgeSqueeze):
        """Initialize class."""
        self.toolkit = toolkit
        self.logger = toolkit.logger.getChild("detector")

    @property
    def config(self):
        """Return the detect config."""
        return self.toolkit.config.detect

    def detect(
        self,
        classifier: Classifier,
        image: Union[str, Path, Image.Image],
        image_id: Optional[str] = None,
    ) -> DetectionReport:
        """Detect defective cells of an image file or decoded image."""
        if isinstance(image, Image.Image):
            img = image
        else:
            try:
                img = open_image(image)
            except OSError as err:
                raise DatasetError(f"Can not read image {image}: {err}") from err
            image_id = image_id or Path(image).stem
        report = detect(
            classifier,
            img,
            self.config.grid,
            self.config.threshold,
            image_id or "image",
            self.toolkit.config.train.batch_size,
        )
        self.logger.info("%s: %s", report.image_id, report.summary())
        return report

    def score(
        self, report: DetectionReport, width: int, height: int, truth: Sequence[BoxLike]
    ) -> DetectionScore:
        """Score a report with the dataset overlap threshold."""
        return score(report, width, height, truth, self.toolkit.config.dataset.overlap_threshold)

    def detect_holdout(
        self,
        classifier: Classifier,
        entries: Sequence[HoldoutEntry],
        out_dir: Union[str, Path],
    ) -> str:
        """
        Run detection over the held out boards.

        Writes {image}.csv and {image}.png per board plus holdout_scores.csv,
        returns the aligned score table.
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        rows = []
        for entry in entries:
            try:
                img = open_image(entry.image_path)
            except OSError as err:
                raise DatasetError(f"Can not read held out image {entry.image_path}") from err
            report = self.detect(classifier, img, entry.image_id)
            write_report(report, out_dir / f"{entry.image_id}.csv")
            render(img, report, entry.boxes, out_dir / f"{entry.image_id}.png")
            result = self.score(report, entry.width, entry.height, entry.boxes)
            rows.append(
                [
                    entry.image_id,
                    "+".join(x.value for x in entry.classes),
                    len(report.cells),
                    len(report.pseudo_boxes),
                    result.true_positives,
                    result.false_positives,
                    result.false_negatives,
                    result.boxes_hit,
                    len(entry.boxes),
                ]
            )
        (out_dir / "holdout_scores.csv").write_text(csv_text(SCORE_COLUMNS, rows), encoding="utf-8")
        totals = [sum(row[idx] for row in rows) for idx in range(2, len(SCORE_COLUMNS))]
        return aligned_table(SCORE_COLUMNS, rows, footer=["total", "", *totals])

