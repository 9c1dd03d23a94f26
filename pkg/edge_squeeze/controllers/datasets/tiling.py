"""Split annotated boards into labeled grid tiles."""
from __future__ import annotations

from typing import Iterable, List, Tuple

from PIL import Image

from edge_squeeze.helpers.geometry import grid_cells, max_overlap
from edge_squeeze.helpers.images import crop_and_resize, encode_png
from edge_squeeze.models.dataset import AnnotatedImage, DefectBox, TileRecord
from edge_squeeze.models.errors import TilingError


def tile_boxes(
    image_id: str,
    width: int,
    height: int,
    boxes: Iterable[DefectBox],
    grid: Tuple[int, int],
    threshold: float,
) -> List[TileRecord]:
    """
    Return one labeled record per grid cell in row-major order.

    A cell is labeled 1 when some box has at least threshold of its area inside the cell,
    overlap_fraction holds the largest such share over all boxes.
    """
    boxes = list(boxes)
    records = []
    for cell in grid_cells(width, height, *grid):
        overlap = max_overlap(cell.window, boxes)
        records.append(
            TileRecord(
                source_image=image_id,
                row=cell.row,
                col=cell.col,
                window=cell.window,
                label=int(overlap >= threshold),
                overlap_fraction=overlap,
            )
        )
    return records


def tile_image(
    image: AnnotatedImage, grid: Tuple[int, int], threshold: float
) -> List[TileRecord]:
    """Return the labeled tiles of an annotated image."""
    return tile_boxes(image.image_id, image.width, image.height, image.boxes, grid, threshold)


def render_tiles(
    img: Image.Image, tiles: Iterable[TileRecord], size: int
) -> List[Tuple[TileRecord, bytes]]:
    """Crop, resize and PNG encode the given tiles of a decoded board image."""
    result = []
    for tile in tiles:
        if tile.window.x1 > img.width or tile.window.y1 > img.height:
            raise TilingError(
                f"Tile r{tile.row}c{tile.col} of {tile.source_image} lies outside the "
                f"{img.width}x{img.height} image"
            )
        result.append((tile, encode_png(crop_and_resize(img, tile.window, size))))
    return result
