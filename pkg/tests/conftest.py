"""Shared fixtures: toolkit instances and synthetic boards."""

import json

import numpy as np
import pytest
from PIL import Image, ImageDraw

from edge_squeeze.models.config import RunConfig
from edge_squeeze.helpers.geometry import Window
from edge_squeeze.models.dataset import AnnotatedImage, DatasetManifest, DefectBox, TileRecord
from edge_squeeze.models.enums import DefectClass, Split
from edge_squeeze.toolkit import EdgeSqueeze

BOARD_SIZE = 200
BRIGHT = 230
DARK = 25


def make_config(**sections) -> RunConfig:
    """Return a run config for the toy variant with section overrides."""
    overrides = {
        "arch": {"variant": "toy"},
        "telemetry": {"enabled": False},
        **sections,
    }
    return RunConfig.load(overrides=overrides)


@pytest.fixture
def toolkit():
    """Return a toolkit configured for the toy variant."""
    with EdgeSqueeze(make_config()) as instance:
        yield instance


def draw_board(path, boxes, size=BOARD_SIZE):
    """Write a dark board with bright defect rectangles."""
    img = Image.new("RGB", (size, size), (DARK, DARK, DARK))
    draw = ImageDraw.Draw(img)
    for box in boxes:
        draw.rectangle(
            (int(box.x0), int(box.y0), int(box.x1) - 1, int(box.y1) - 1),
            fill=(BRIGHT, BRIGHT, BRIGHT),
        )
    img.save(path)
    return path


def synthetic_images(count, boxes_per_image=3, size=1000, seed=0, classes=None):
    """Return annotation-only boards with one defect per distinct grid cell."""
    rng = np.random.default_rng(seed)
    classes = classes or [DefectClass.SHORT, DefectClass.MOUSE_BITE]
    cell = size // 10
    images = []
    for idx in range(count):
        cells = rng.choice(100, size=boxes_per_image, replace=False)
        boxes = []
        for num, cell_idx in enumerate(sorted(cells)):
            row, col = divmod(int(cell_idx), 10)
            x0, y0 = col * cell + 20, row * cell + 20
            boxes.append(
                DefectBox(classes[(idx + num) % len(classes)], x0, y0, x0 + 40, y0 + 40)
            )
        images.append(
            AnnotatedImage(
                image_id=f"board_{idx:04d}",
                image_path=f"board_{idx:04d}.jpg",
                width=size,
                height=size,
                boxes=tuple(boxes),
            )
        )
    return images


def write_annotated_boards(directory, count, boxes_per_image=2, seed=0, classes=None):
    """Write small board images with JSON annotations, return the annotation dir."""
    rng = np.random.default_rng(seed)
    classes = classes or [DefectClass.SHORT, DefectClass.MOUSE_BITE]
    images_dir = directory / "images"
    annotations_dir = directory / "annotations"
    images_dir.mkdir(parents=True, exist_ok=True)
    annotations_dir.mkdir(parents=True, exist_ok=True)
    cell = BOARD_SIZE // 10
    for idx in range(count):
        cells = sorted(rng.choice(100, size=boxes_per_image, replace=False))
        boxes = []
        for num, cell_idx in enumerate(cells):
            row, col = divmod(int(cell_idx), 10)
            boxes.append(
                DefectBox(
                    classes[(idx + num) % len(classes)],
                    col * cell + 4,
                    row * cell + 4,
                    col * cell + 16,
                    row * cell + 16,
                )
            )
        draw_board(images_dir / f"board_{idx:03d}.png", boxes)
        record = {
            "image": f"../images/board_{idx:03d}.png",
            "width": BOARD_SIZE,
            "height": BOARD_SIZE,
            "boxes": [
                {"class": x.class_name.value, "x0": x.x0, "y0": x.y0, "x1": x.x1, "y1": x.y1}
                for x in boxes
            ],
        }
        (annotations_dir / f"board_{idx:03d}.json").write_text(
            json.dumps(record), encoding="utf-8"
        )
    return annotations_dir


def write_tile_dataset(directory, counts=None, size=32, seed=0):
    """Write bright (defective) and dark (clean) tiles, return their manifest."""
    counts = counts or {Split.TRAIN: 32}
    rng = np.random.default_rng(seed)
    tiles = []
    for split, count in counts.items():
        for idx in range(count):
            label = idx % 2
            base = BRIGHT if label else DARK
            noise = rng.integers(-20, 21, size=(size, size, 3))
            pixels = np.clip(base + noise, 0, 255).astype(np.uint8)
            path = f"dataset/{split.value}/{label}/tile_{split.value}_{idx:03d}_r0_c0.png"
            (directory / path).parent.mkdir(parents=True, exist_ok=True)
            Image.fromarray(pixels, mode="RGB").save(directory / path)
            tiles.append(
                TileRecord(
                    source_image=f"tile_{split.value}_{idx:03d}",
                    row=0,
                    col=0,
                    window=Window(0, 0, size, size),
                    label=label,
                    overlap_fraction=float(label),
                    split=split,
                    path=path,
                )
            )
    return DatasetManifest(
        seed=seed,
        config_digest="synthetic",
        tiles=tiles,
        target_count=len(tiles),
        tile_size=size,
    )
