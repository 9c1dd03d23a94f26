"""DatasetController: annotation parsing, tile dataset generation and batch loading."""
from __future__ import annotations

import json
from pathlib import Path
from typing import TYPE_CHECKING, Iterator, List, Optional, Union

from edge_squeeze.constants import HOLDOUT_FILE, MANIFEST_FILE
from edge_squeeze.models.dataset import AnnotatedImage, DatasetManifest, HoldoutEntry
from edge_squeeze.models.enums import EventType, Split
from edge_squeeze.models.errors import DatasetError
from edge_squeeze.models.event import ToolkitEvent

from .annotations import parse_annotations
from .generator import generate_dataset
from .loader import Batch, load_batches

if TYPE_CHECKING:
    from edge_squeeze.toolkit import EdgeSqueeze


def load_manifest(path: Union[str, Path]) -> DatasetManifest:
    """Read a manifest file, or the manifest inside a dataset directory."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_FILE
    try:
        return DatasetManifest.from_text(path.read_text(encoding="utf-8"))
    except FileNotFoundError as err:
        raise DatasetError(f"Manifest not found: {path}") from err


def load_holdout(path: Union[str, Path]) -> List[HoldoutEntry]:
    """Read the holdout index of a dataset directory."""
    path = Path(path)
    if path.is_dir():
        path = path / HOLDOUT_FILE
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
        return [HoldoutEntry.from_dict(json.loads(x)) for x in lines if x.strip()]
    except FileNotFoundError as err:
        raise DatasetError(f"Holdout index not found: {path}") from err
    except (ValueError, KeyError, TypeError) as err:
        raise DatasetError(f"Malformed holdout index {path}: {err}") from err


class DatasetController:
    """Builds the binary tile dataset and feeds it to the trainer."""

    def __init__(self, toolkit: EdgeSqueeze):
        """Initialize class."""
        self.toolkit = toolkit
        self.logger = toolkit.logger.getChild("datasets")

    @property
    def config(self):
        """Return the dataset config."""
        return self.toolkit.config.dataset

    def parse_annotations(self, path: Union[str, Path]) -> List[AnnotatedImage]:
        """Parse the annotation file(s) at path."""
        images = parse_annotations(path)
        self.logger.info(
            "Read %s annotated images with %s defect boxes from %s",
            len(images),
            sum(len(x.boxes) for x in images),
            path,
        )
        return images

    async def generate(
        self, annotations: Union[str, Path], out_dir: Union[str, Path]
    ) -> DatasetManifest:
        """Generate the tile dataset of the annotated boards into out_dir."""
        images = self.parse_annotations(annotations)
        manifest = await generate_dataset(images, self.config, Path(out_dir))
        sizes = manifest.split_sizes()
        self.logger.info(
            "Generated %s tiles (train %s, val %s, test %s), manifest digest %s",
            len(manifest.tiles),
            sizes["train"],
            sizes["val"],
            sizes["test"],
            manifest.digest(),
        )
        self.toolkit.signal_event(
            ToolkitEvent(EventType.DATASET_GENERATED, str(out_dir), manifest)
        )
        return manifest

    def load_batches(
        self,
        dataset_dir: Union[str, Path],
        manifest: DatasetManifest,
        split: Union[Split, str],
        batch_size: Optional[int] = None,
        shuffle_seed: Optional[int] = None,
        epoch: int = 0,
        size: Optional[int] = None,
    ) -> Iterator[Batch]:
        """Yield the batches of a split, batch size and prefetch from the train config."""
        return load_batches(
            manifest,
            split,
            batch_size or self.toolkit.config.train.batch_size,
            shuffle_seed,
            root=dataset_dir,
            epoch=epoch,
            size=size,
            prefetch=self.toolkit.config.train.prefetch,
        )

