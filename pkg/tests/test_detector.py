"""Tests for grid detection, scoring and rendering."""

import csv

import numpy as np
from PIL import Image

from edge_squeeze.controllers.datasets.annotations import parse_annotations
from edge_squeeze.controllers.detector import detect, render, score, write_report
from edge_squeeze.helpers.geometry import Window, defective_cells, grid_cells
from edge_squeeze.helpers.images import crop_and_resize, to_chw_array
from edge_squeeze.models.dataset import DefectBox, HoldoutEntry
from edge_squeeze.models.detection import CellPrediction, DetectionReport
from edge_squeeze.models.enums import DefectClass

from .conftest import BOARD_SIZE, DARK, draw_board, write_annotated_boards


class ConstantClassifier:
    """Returns the same probability for every tile."""

    input_size = 16

    def __init__(self, prob):
        self.prob = prob

    def predict(self, batch):
        return np.full(len(batch), self.prob, dtype=np.float32)


class BrightnessClassifier:
    """Calls a tile defective when it holds any bright pixel."""

    input_size = 16

    def predict(self, batch):
        return batch.max(axis=(1, 2, 3))


class RandomClassifier:
    """Returns a fixed pseudo random probability per tile content."""

    input_size = 8

    def predict(self, batch):
        seeds = [int(abs(x.sum() * 1000)) for x in batch]
        return np.array([np.random.default_rng(x).random() for x in seeds])


def _report(*decided):
    grid_windows = [Window(c * 20, r * 20, c * 20 + 20, r * 20 + 20) for r, c in decided]
    cells = tuple(
        CellPrediction(row, col, window, 0.9, 1)
        for (row, col), window in zip(decided, grid_windows)
    )
    return DetectionReport("board", (10, 10), 0.5, cells)


def test_detect_cells(tmp_path):
    """Test every cell is classified in row-major order."""
    img = Image.new("RGB", (1003, 998), (DARK, DARK, DARK))
    report = detect(ConstantClassifier(0.0), img, image_id="blank")
    assert len(report.cells) == 100
    assert [(x.row, x.col) for x in report.cells[:2]] == [(0, 0), (0, 1)]
    assert report.cells[-1].window == Window(900, 891, 1003, 998)
    assert not report.pseudo_boxes
    assert report.summary() == "100 cells, 0 positive"
    report = detect(ConstantClassifier(0.5), img, threshold=0.5, batch_size=7)
    assert len(report.pseudo_boxes) == 100
    # the CSV holds one line per cell
    path = write_report(report, tmp_path / "report.csv")
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 100
    assert rows[0] == {"row": "0", "col": "0", "prob": "0.500000", "decision": "1"}


def test_detect_finds_bright_boxes(tmp_path):
    """Test a brightness classifier marks exactly the cells holding defects."""
    boxes = [
        DefectBox(DefectClass.SHORT, 44, 44, 56, 56),
        DefectBox(DefectClass.SPUR, 164, 104, 176, 116),
    ]
    path = draw_board(tmp_path / "board.png", boxes)
    report = detect(BrightnessClassifier(), Image.open(path))
    assert report.positive_cells == {(2, 2), (5, 8)}
    result = score(report, BOARD_SIZE, BOARD_SIZE, boxes, 0.3)
    assert (result.true_positives, result.false_positives, result.false_negatives) == (2, 0, 0)
    assert result.box_hits == (True, True)
    assert result.precision == 1.0
    assert result.recall == 1.0


def test_score_cases():
    """Test cell level true and false positives and box hits."""
    boxes = [
        DefectBox(DefectClass.SHORT, 44, 44, 56, 56),
        DefectBox(DefectClass.SHORT, 104, 4, 116, 16),
    ]
    result = score(_report((2, 2), (9, 9)), BOARD_SIZE, BOARD_SIZE, boxes, 0.3)
    assert result.true_positives == 1
    assert result.false_positives == 1
    assert result.false_negatives == 1
    assert result.box_hits == (True, False)
    assert result.boxes_hit == 1
    assert result.precision == 0.5
    empty = score(_report(), BOARD_SIZE, BOARD_SIZE, [], 0.3)
    assert (empty.precision, empty.recall, empty.boxes_hit) == (0.0, 0.0, 0)


def test_threshold_monotonic():
    """Test raising the threshold never adds positive cells."""
    img = Image.fromarray(
        np.random.default_rng(5).integers(0, 255, (120, 120, 3), dtype=np.uint8), mode="RGB"
    )
    previous = None
    for threshold in (0.1, 0.3, 0.5, 0.7, 0.9):
        cells = detect(RandomClassifier(), img, threshold=threshold).positive_cells
        if previous is not None:
            assert cells <= previous
        previous = cells


def test_render_colors(tmp_path):
    """Test predicted cells are drawn in red under yellow truth boxes."""
    img = Image.new("RGB", (BOARD_SIZE, BOARD_SIZE), (DARK, DARK, DARK))
    report = _report((0, 0), (2, 2))
    truth = [
        DefectBox(DefectClass.SHORT, 40, 40, 60, 60),
        DefectBox(DefectClass.SHORT, 100, 100, 130, 130),
    ]
    canvas = render(img, report, truth, tmp_path / "board.png")
    assert (tmp_path / "board.png").read_bytes().startswith(b"\x89PNG")
    assert canvas.getpixel((0, 0)) == (255, 0, 0)
    assert canvas.getpixel((2, 10)) == (255, 0, 0)
    assert canvas.getpixel((3, 10)) == (DARK, DARK, DARK)
    assert canvas.getpixel((19, 19)) == (255, 0, 0)
    # truth drawn over the prediction of the same cell
    assert canvas.getpixel((40, 40)) == (255, 255, 0)
    assert canvas.getpixel((100, 115)) == (255, 255, 0)
    assert canvas.getpixel((115, 115)) == (DARK, DARK, DARK)
    assert img.getpixel((0, 0)) == (DARK, DARK, DARK)


def test_detect_holdout(toolkit, tmp_path):
    """Test held out boards get a report, a rendering and a score row."""
    annotations = write_annotated_boards(
        tmp_path / "src", 3, classes=[DefectClass.SPUR, DefectClass.SHORT]
    )
    entries = [
        HoldoutEntry(
            x.image_id,
            x.image_path,
            x.width,
            x.height,
            tuple(sorted({b.class_name for b in x.boxes}, key=lambda c: c.value)),
            x.boxes,
        )
        for x in parse_annotations(annotations)
    ]
    table = toolkit.detector.detect_holdout(BrightnessClassifier(), entries, tmp_path / "out")
    for entry in entries:
        assert (tmp_path / "out" / f"{entry.image_id}.csv").is_file()
        assert (tmp_path / "out" / f"{entry.image_id}.png").is_file()
    rows = list(csv.DictReader((tmp_path / "out" / "holdout_scores.csv").open()))
    assert [x["image"] for x in rows] == [x.image_id for x in entries]
    assert all(x["cells"] == "100" and x["fp"] == "0" and x["fn"] == "0" for x in rows)
    assert all(x["boxes_hit"] == x["boxes"] == "2" for x in rows)
    assert table.splitlines()[-1].startswith("total")


class LookupClassifier:
    """Memorizes tiles by content and answers 1 for the remembered ones."""

    input_size = 16

    def __init__(self, tiles):
        self.known = {x.tobytes() for x in tiles}

    def predict(self, batch):
        return np.array([float(x.tobytes() in self.known) for x in batch])


def test_memorized_tiles_round_trip():
    """Test a classifier memorizing positive tiles reproduces exactly those cells."""
    pixels = np.random.default_rng(3).integers(0, 255, (240, 320, 3), dtype=np.uint8)
    img = Image.fromarray(pixels, mode="RGB")
    boxes = [
        DefectBox(DefectClass.SHORT, 10, 10, 20, 18),
        DefectBox(DefectClass.SPUR, 150, 100, 200, 140),
    ]
    truth = defective_cells(img.width, img.height, (10, 10), boxes, 0.3)
    windows = {(x.row, x.col): x.window for x in grid_cells(img.width, img.height, 10, 10)}
    memorized = [to_chw_array(crop_and_resize(img, windows[x], 16), 16) for x in truth]
    report = detect(LookupClassifier(memorized), img, threshold=0.5)
    assert report.positive_cells == truth
    assert sorted(x.as_tuple() for x in report.pseudo_boxes) == sorted(
        windows[x].as_tuple() for x in truth
    )
    result = score(report, img.width, img.height, boxes, 0.3)
    assert (result.false_positives, result.false_negatives) == (0, 0)
