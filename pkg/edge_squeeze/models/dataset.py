"""Models for annotated boards, tiles and the dataset manifest."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from mashumaro import DataClassDictMixin
from mashumaro.exceptions import InvalidFieldValue, MissingField

from edge_squeeze.helpers.geometry import Window
from edge_squeeze.helpers.json import content_digest, json_lines
from edge_squeeze.models.enums import DefectClass, Split
from edge_squeeze.models.errors import DatasetError

SPLIT_ORDER = (Split.TRAIN, Split.VAL, Split.TEST)


@dataclass(frozen=True)
class DefectBox(DataClassDictMixin):
    """Annotated defect, pixel corners with x0 < x1 and y0 < y1."""

    class_name: DefectClass
    x0: float
    y0: float
    x1: float
    y1: float


@dataclass(frozen=True)
class AnnotatedImage(DataClassDictMixin):
    """A full board image with its defect boxes."""

    image_id: str
    image_path: str
    width: int
    height: int
    boxes: Tuple[DefectBox, ...] = ()
    annotation_path: Optional[str] = None

    def classes(self) -> List[DefectClass]:
        """Return the distinct defect classes on this image."""
        return sorted({x.class_name for x in self.boxes}, key=lambda x: x.value)


@dataclass(frozen=True)
class TileRecord(DataClassDictMixin):
    """A grid cell of a source image with its binary label."""

    source_image: str
    row: int
    col: int
    window: Window
    label: int
    overlap_fraction: float
    split: Optional[Split] = None
    path: Optional[str] = None

    @property
    def sort_key(self) -> Tuple[str, int, int]:
        """Return the stable ordering key within a split."""
        return (self.source_image, self.row, self.col)


@dataclass
class DatasetManifest(DataClassDictMixin):
    """Catalog of the generated tiles plus the settings that produced them."""

    seed: int
    config_digest: str
    tiles: List[TileRecord] = field(default_factory=list)
    target_count: int = 0
    ratio: Tuple[int, int, int] = (7, 2, 1)
    grid: Tuple[int, int] = (10, 10)
    overlap_threshold: float = 0.3
    tile_size: int = 224
    holdout: Tuple[DefectClass, ...] = ()
    source_count: int = 0

    def tiles_in(self, split: Split) -> List[TileRecord]:
        """Return the tiles of one split."""
        return [x for x in self.tiles if x.split == split]

    def counts(self) -> Dict[str, Dict[str, int]]:
        """Return label counts per split."""
        result = {x.value: {"0": 0, "1": 0} for x in SPLIT_ORDER}
        for tile in self.tiles:
            result[tile.split.value][str(tile.label)] += 1
        return result

    def split_sizes(self) -> Dict[str, int]:
        """Return number of tiles per split."""
        return {split: sum(labels.values()) for split, labels in self.counts().items()}

    def sources_by_split(self) -> Dict[str, set]:
        """Return the source image ids used by each split."""
        result: Dict[str, set] = {x.value: set() for x in SPLIT_ORDER}
        for tile in self.tiles:
            result[tile.split.value].add(tile.source_image)
        return result

    def to_text(self) -> str:
        """Return the manifest as json lines: a header record then one record per tile."""
        header = {
            "record": "manifest",
            "seed": self.seed,
            "config_digest": self.config_digest,
            "target_count": self.target_count,
            "ratio": list(self.ratio),
            "grid": list(self.grid),
            "overlap_threshold": self.overlap_threshold,
            "tile_size": self.tile_size,
            "holdout": [x.value for x in self.holdout],
            "source_count": self.source_count,
            "counts": self.counts(),
        }
        return json_lines([header] + [{"record": "tile", **x.to_dict()} for x in self.tiles])

    def digest(self) -> str:
        """Return the sha256 of the manifest text."""
        return content_digest(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "DatasetManifest":
        """Parse a manifest from its json lines text."""
        header = None
        tiles = []
        try:
            for line in text.splitlines():
                if not line.strip():
                    continue
                record = json.loads(line)
                kind = record.pop("record")
                if kind == "manifest":
                    header = record
                elif kind == "tile":
                    tiles.append(TileRecord.from_dict(record))
            if header is None:
                raise DatasetError("Manifest has no header record")
            header.pop("counts", None)
            manifest = cls.from_dict(header)
        except (KeyError, ValueError, TypeError, InvalidFieldValue, MissingField) as err:
            raise DatasetError(f"Malformed manifest: {err}") from err
        manifest.tiles = tiles
        return manifest


@dataclass(frozen=True)
class HoldoutEntry(DataClassDictMixin):
    """An image excluded from the dataset because it shows a held out class."""

    image_id: str
    image_path: str
    width: int
    height: int
    classes: Tuple[DefectClass, ...]
    boxes: Tuple[DefectBox, ...]
