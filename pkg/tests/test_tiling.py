"""Tests for annotation parsing and tiling."""

import json

import numpy as np
from PIL import Image
from pytest import raises

from edge_squeeze.controllers.datasets.annotations import (
    parse_annotations,
    parse_json_annotation,
    parse_voc_annotation,
)
from edge_squeeze.controllers.datasets.tiling import render_tiles, tile_boxes, tile_image
from edge_squeeze.models.dataset import AnnotatedImage, DefectBox
from edge_squeeze.models.enums import DefectClass
from edge_squeeze.models.errors import AnnotationError, TilingError

VOC_TEMPLATE = """<annotation>
  <filename>{filename}</filename>
  <size><width>600</width><height>400</height><depth>3</depth></size>
  <object>
    <name>missing_hole</name>
    <bndbox><xmin>10</xmin><ymin>20</ymin><xmax>50</xmax><ymax>60</ymax></bndbox>
  </object>
  <object>
    <name>spur</name>
    <bndbox><xmin>{xmin}</xmin><ymin>100</ymin><xmax>{xmax}</xmax><ymax>140</ymax></bndbox>
  </object>
</annotation>
"""


def _box(x0, y0, x1, y1, class_name=DefectClass.SHORT):
    return DefectBox(class_name, x0, y0, x1, y1)


def test_no_boxes():
    """Test an image without defects gives only negative tiles."""
    tiles = tile_boxes("board", 1000, 1000, [], (10, 10), 0.3)
    assert len(tiles) == 100
    assert not any(x.label for x in tiles)
    assert [(x.row, x.col) for x in tiles[:3]] == [(0, 0), (0, 1), (0, 2)]


def test_contained_and_straddling_boxes():
    """Test labels of contained and straddling boxes."""
    image = AnnotatedImage(
        "board",
        "board.png",
        1000,
        1000,
        (
            _box(120, 120, 160, 160),  # inside cell (1, 1)
            _box(540, 10, 640, 30),  # 60/40 over cells (0, 5) and (0, 6)
            _box(820, 510, 920, 530),  # 80/20 over cells (5, 8) and (5, 9)
        ),
    )
    tiles = {(x.row, x.col): x for x in tile_image(image, (10, 10), 0.3)}
    positives = {key for key, tile in tiles.items() if tile.label}
    assert positives == {(1, 1), (0, 5), (0, 6), (5, 8)}
    assert tiles[(1, 1)].overlap_fraction == 1.0
    assert tiles[(0, 5)].overlap_fraction == 0.6
    assert tiles[(5, 9)].overlap_fraction == 0.2
    # a stricter threshold drops the 40% share
    strict = {(x.row, x.col) for x in tile_image(image, (10, 10), 0.5) if x.label}
    assert strict == {(1, 1), (0, 5), (5, 8)}


def test_grid_too_large():
    """Test tiling fails when the grid has more cells than pixels."""
    with raises(TilingError):
        tile_boxes("tiny", 5, 5, [], (10, 10), 0.3)


def test_render_tiles():
    """Test tiles are cropped and resized to the tile size."""
    img = Image.new("RGB", (100, 100), (10, 20, 30))
    tiles = tile_boxes("board", 100, 100, [], (2, 2), 0.3)
    rendered = render_tiles(img, tiles, 32)
    assert len(rendered) == 4
    assert rendered[0][1].startswith(b"\x89PNG")
    with raises(TilingError):
        render_tiles(Image.new("RGB", (60, 60)), tiles, 32)


def test_parse_json(tmp_path):
    """Test the JSON annotation schema."""
    path = tmp_path / "boards.json"
    path.write_text(
        json.dumps(
            [
                {
                    "image": "01 Short.jpg",
                    "width": 600,
                    "height": 400,
                    "boxes": [{"class": "Short", "x0": 1, "y0": 2, "x1": 30, "y1": 40}],
                },
                {"image": "02_clean.jpg", "width": 600, "height": 400},
            ]
        ),
        encoding="utf-8",
    )
    images = parse_json_annotation(path)
    assert [x.image_id for x in images] == ["01_short", "02_clean"]
    assert images[0].boxes == (_box(1, 2, 30, 40),)
    assert images[0].image_path == str((tmp_path / "01 Short.jpg").resolve())
    assert not images[1].boxes
    # size read from the image when omitted
    Image.new("RGB", (64, 48)).save(tmp_path / "03.png")
    path.write_text(json.dumps({"image": "03.png", "boxes": []}), encoding="utf-8")
    assert parse_json_annotation(path)[0].width == 64


def test_parse_json_errors(tmp_path):
    """Test malformed JSON annotations name the offending box."""
    path = tmp_path / "bad.json"
    record = {
        "image": "a.jpg",
        "width": 100,
        "height": 100,
        "boxes": [
            {"class": "short", "x0": 1, "y0": 1, "x1": 5, "y1": 5},
            {"class": "short", "x0": 50, "y0": 1, "x1": 150, "y1": 5},
        ],
    }
    path.write_text(json.dumps(record), encoding="utf-8")
    with raises(AnnotationError, match="box 1"):
        parse_json_annotation(path)
    record["boxes"] = [{"class": "scratch", "x0": 1, "y0": 1, "x1": 5, "y1": 5}]
    path.write_text(json.dumps(record), encoding="utf-8")
    with raises(AnnotationError, match="scratch"):
        parse_json_annotation(path)
    path.write_text("{not json", encoding="utf-8")
    with raises(AnnotationError):
        parse_json_annotation(path)


def test_parse_voc(tmp_path):
    """Test the VOC style XML subset."""
    path = tmp_path / "02_spur_01.xml"
    path.write_text(
        VOC_TEMPLATE.format(filename="02_spur_01.jpg", xmin=200, xmax=260), encoding="utf-8"
    )
    (image,) = parse_voc_annotation(path)
    assert image.image_id == "02_spur_01"
    assert (image.width, image.height) == (600, 400)
    assert [x.class_name for x in image.boxes] == [DefectClass.MISSING_HOLE, DefectClass.SPUR]
    assert image.boxes[1] == _box(200, 100, 260, 140, DefectClass.SPUR)
    # xmin > xmax names the object
    path.write_text(
        VOC_TEMPLATE.format(filename="02_spur_01.jpg", xmin=300, xmax=260), encoding="utf-8"
    )
    with raises(AnnotationError, match=r"object 1 \(spur\)"):
        parse_voc_annotation(path)
    path.write_text("<annotation><filename>", encoding="utf-8")
    with raises(AnnotationError):
        parse_voc_annotation(path)


def test_parse_directory(tmp_path):
    """Test directories are read in name order and ids must be unique."""
    (tmp_path / "b.xml").write_text(
        VOC_TEMPLATE.format(filename="board_b.jpg", xmin=200, xmax=260), encoding="utf-8"
    )
    (tmp_path / "a.json").write_text(
        json.dumps({"image": "board_a.jpg", "width": 10, "height": 10}), encoding="utf-8"
    )
    (tmp_path / "notes.txt").write_text("ignored", encoding="utf-8")
    images = parse_annotations(tmp_path)
    assert [x.image_id for x in images] == ["board_a", "board_b"]
    (tmp_path / "c.json").write_text(
        json.dumps({"image": "board_a.jpg", "width": 10, "height": 10}), encoding="utf-8"
    )
    with raises(AnnotationError, match="more than once"):
        parse_annotations(tmp_path)
    with raises(AnnotationError):
        parse_annotations(tmp_path / "missing")


def _oracle_labels(width, height, grid, boxes, threshold):
    """Label cells by counting box pixels inside each cell."""
    rows, cols = grid
    cell_w, cell_h = width // cols, height // rows
    labels = {}
    for row in range(rows):
        for col in range(cols):
            y0, x0 = row * cell_h, col * cell_w
            y1 = height if row == rows - 1 else y0 + cell_h
            x1 = width if col == cols - 1 else x0 + cell_w
            hit = False
            for box in boxes:
                mask = np.zeros((height, width), dtype=bool)
                mask[int(box.y0) : int(box.y1), int(box.x0) : int(box.x1)] = True
                if mask[y0:y1, x0:x1].sum() / mask.sum() >= threshold:
                    hit = True
            labels[(row, col)] = int(hit)
    return labels


def test_labels_match_pixel_oracle():
    """Test tile labels against pixel counting on random boards."""
    rng = np.random.default_rng(1234)
    for _ in range(1000):
        width, height = (int(x) for x in rng.integers(12, 48, size=2))
        grid = tuple(int(x) for x in rng.integers(1, 6, size=2))
        boxes = []
        for _ in range(int(rng.integers(0, 4))):
            x0, x1 = sorted(int(x) for x in rng.choice(width + 1, size=2, replace=False))
            y0, y1 = sorted(int(x) for x in rng.choice(height + 1, size=2, replace=False))
            boxes.append(_box(x0, y0, x1, y1))
        threshold = float(rng.choice([0.1, 0.3, 0.5, 0.9]))
        tiles = tile_boxes("board", width, height, boxes, grid, threshold)
        expected = _oracle_labels(width, height, grid, boxes, threshold)
        assert {(x.row, x.col): x.label for x in tiles} == expected
