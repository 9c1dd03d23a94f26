"""Helper and utility functions."""
from __future__ import annotations

import re
from typing import Iterable, Iterator, List, Sequence, Tuple, TypeVar

from slugify import slugify

# pylint: disable=invalid-name
T = TypeVar("T")
# pylint: enable=invalid-name

RATIO_RE = re.compile(r"^\s*(\d+)\s*:\s*(\d+)\s*:\s*(\d+)\s*$")
GRID_RE = re.compile(r"^\s*(\d+)\s*[xX]\s*(\d+)\s*$")


def try_parse_int(possible_int, default: int = 0) -> int:
    """Try to parse an int."""
    try:
        return int(possible_int)
    except (TypeError, ValueError):
        return default


def try_parse_float(possible_float, default: float = 0.0) -> float:
    """Try to parse a float."""
    try:
        return float(possible_float)
    except (TypeError, ValueError):
        return default


def try_parse_bool(possible_bool) -> bool:
    """Try to parse a bool."""
    if isinstance(possible_bool, bool):
        return possible_bool
    return possible_bool in ["true", "True", "yes", "1", "on", "ON", 1]


def parse_ratio(ratio_str: str) -> Tuple[int, int, int]:
    """Parse a split ratio string like '7:2:1'."""
    if not (match := RATIO_RE.match(ratio_str)):
        raise ValueError(f"Not a valid split ratio (expected a:b:c): {ratio_str}")
    ratio = tuple(int(x) for x in match.groups())
    if sum(ratio) == 0:
        raise ValueError(f"Split ratio can not be all zeros: {ratio_str}")
    return ratio


def parse_grid(grid_str: str) -> Tuple[int, int]:
    """Parse a grid string like '10x10' into (rows, cols)."""
    if not (match := GRID_RE.match(grid_str)):
        raise ValueError(f"Not a valid grid (expected RxC): {grid_str}")
    rows, cols = (int(x) for x in match.groups())
    if rows < 1 or cols < 1:
        raise ValueError(f"Grid dimensions must be positive: {grid_str}")
    return rows, cols


def create_image_id(name: str) -> str:
    """Return a stable, filesystem safe id for a source image name."""
    return slugify(name, separator="_", lowercase=True) or "image"


def split_counts(total: int, ratio: Sequence[int]) -> List[int]:
    """Split total into integer parts by ratio, remainder goes to the first part."""
    parts = [total * x // sum(ratio) for x in ratio]
    parts[0] += total - sum(parts)
    return parts


def chunked(items: Iterable[T], size: int) -> Iterator[List[T]]:
    """Yield successive lists of (at most) size items."""
    chunk: List[T] = []
    for item in items:
        chunk.append(item)
        if len(chunk) == size:
            yield chunk
            chunk = []
    if chunk:
        yield chunk
