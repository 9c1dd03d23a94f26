"""Grid partitioning and the tile/defect overlap rule.

Tile generation and detection scoring both label cells through this module,
so the two always agree on which cells are defective.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Protocol, Set, Tuple

from mashumaro import DataClassDictMixin

from edge_squeeze.models.errors import TilingError

Cell = Tuple[int, int]


class BoxLike(Protocol):
    """Anything with pixel corner coordinates."""

    x0: float
    y0: float
    x1: float
    y1: float


@dataclass(frozen=True)
class Window(DataClassDictMixin):
    """Pixel window of a grid cell, end coordinates exclusive."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        """Return width in pixels."""
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        """Return height in pixels."""
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        """Return area in pixels."""
        return self.width * self.height

    def as_tuple(self) -> Tuple[int, int, int, int]:
        """Return (x0, y0, x1, y1)."""
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass(frozen=True)
class GridCell:
    """A grid cell with its position and pixel window."""

    row: int
    col: int
    window: Window


def box_area(box: BoxLike) -> float:
    """Return area of a box."""
    return max(0.0, box.x1 - box.x0) * max(0.0, box.y1 - box.y0)


def intersection_area(window: Window, box: BoxLike) -> float:
    """Return the area shared by a window and a box."""
    width = min(window.x1, box.x1) - max(window.x0, box.x0)
    height = min(window.y1, box.y1) - max(window.y0, box.y0)
    if width <= 0 or height <= 0:
        return 0.0
    return width * height


def overlap_fraction(window: Window, box: BoxLike) -> float:
    """Return the fraction of the box area that falls inside the window."""
    area = box_area(box)
    if area <= 0:
        return 0.0
    return intersection_area(window, box) / area


def max_overlap(window: Window, boxes: Iterable[BoxLike]) -> float:
    """Return the largest overlap fraction of any box with the window."""
    return max((overlap_fraction(window, box) for box in boxes), default=0.0)


def is_defective(window: Window, boxes: Iterable[BoxLike], threshold: float) -> bool:
    """Apply the overlap rule: some box has at least threshold of its area inside."""
    return any(overlap_fraction(window, box) >= threshold for box in boxes)


def grid_cells(width: int, height: int, rows: int, cols: int) -> List[GridCell]:
    """
    Partition an image into a rows x cols grid in row-major order.

    Cells are equal sized, the last row/col absorbs the remainder pixels.
    """
    if width <= 0 or height <= 0:
        raise TilingError("Can not tile an empty image")
    if rows < 1 or cols < 1:
        raise TilingError(f"Invalid grid {rows}x{cols}")
    if rows > height or cols > width:
        raise TilingError(
            f"Grid {rows}x{cols} is larger than the image ({width}x{height} pixels)"
        )
    cell_w = width // cols
    cell_h = height // rows
    cells = []
    for row in range(rows):
        y0 = row * cell_h
        y1 = height if row == rows - 1 else y0 + cell_h
        for col in range(cols):
            x0 = col * cell_w
            x1 = width if col == cols - 1 else x0 + cell_w
            cells.append(GridCell(row, col, Window(x0, y0, x1, y1)))
    return cells


def defective_cells(
    width: int,
    height: int,
    grid: Tuple[int, int],
    boxes: Iterable[BoxLike],
    threshold: float,
) -> Set[Cell]:
    """Return the set of (row, col) cells the overlap rule marks defective."""
    boxes = list(boxes)
    return {
        (cell.row, cell.col)
        for cell in grid_cells(width, height, *grid)
        if is_defective(cell.window, boxes, threshold)
    }
