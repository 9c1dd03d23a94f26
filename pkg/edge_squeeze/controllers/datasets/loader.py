"""Batch loading of materialized tiles with a prefetching reader thread."""
from __future__ import annotations

import queue
import threading
from pathlib import Path
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np

from edge_squeeze.helpers.images import open_image, to_chw_array
from edge_squeeze.helpers.util import chunked
from edge_squeeze.models.dataset import DatasetManifest, TileRecord
from edge_squeeze.models.enums import Split
from edge_squeeze.models.errors import DatasetError, EmptySplitError
from edge_squeeze.tensor.tensor import Tensor

Batch = Tuple[Tensor, Tensor]

_DONE = object()


def epoch_order(count: int, shuffle_seed: Optional[int], epoch: int) -> np.ndarray:
    """Return the tile order of an epoch, a permutation seeded by (seed, epoch)."""
    if shuffle_seed is None:
        return np.arange(count)
    return np.random.default_rng([shuffle_seed, epoch]).permutation(count)


def read_tile(root: Path, tile: TileRecord, size: int) -> np.ndarray:
    """Decode one tile file into a float32 CHW array scaled to [0, 1]."""
    if not tile.path:
        raise DatasetError(f"Tile r{tile.row}c{tile.col} of {tile.source_image} has no file")
    path = root / tile.path
    try:
        return to_chw_array(open_image(path), size)
    except FileNotFoundError as err:
        raise DatasetError(f"Missing tile file: {path}") from err
    except OSError as err:
        raise DatasetError(f"Unreadable tile file {path}: {err}") from err


def _make_batch(root: Path, tiles: List[TileRecord], size: int) -> Batch:
    images = np.stack([read_tile(root, x, size) for x in tiles])
    labels = np.array([[x.label] for x in tiles], dtype=np.float32)
    return Tensor(images), Tensor(labels)


def split_tiles(manifest: DatasetManifest, split: Union[Split, str]) -> List[TileRecord]:
    """Return the tiles of a split, raising EmptySplitError when there are none."""
    split = Split(split)
    tiles = manifest.tiles_in(split)
    if not tiles:
        raise EmptySplitError(f"Dataset has no tiles in the {split.value} split")
    return tiles


def num_batches(count: int, batch_size: int) -> int:
    """Return the number of batches an epoch yields, the last one may be partial."""
    return -(-count // batch_size)


def load_batches(
    manifest: DatasetManifest,
    split: Union[Split, str],
    batch_size: int,
    shuffle_seed: Optional[int] = None,
    *,
    root: Union[str, Path] = ".",
    epoch: int = 0,
    size: Optional[int] = None,
    prefetch: int = 2,
) -> Iterator[Batch]:
    """
    Yield (images Bx3xSxS, labels Bx1) batches of one split.

    The order is fixed by shuffle_seed and epoch, prefetch only controls how many
    batches the reader thread decodes ahead.
    """
    tiles = split_tiles(manifest, split)
    if batch_size < 1:
        raise DatasetError("batch_size must be >= 1")
    root = Path(root)
    size = size or manifest.tile_size
    ordered = [tiles[idx] for idx in epoch_order(len(tiles), shuffle_seed, epoch)]
    if prefetch < 1:
        for chunk in chunked(ordered, batch_size):
            yield _make_batch(root, chunk, size)
        return

    results: queue.Queue = queue.Queue(maxsize=prefetch)
    stop = threading.Event()

    def _put(item) -> bool:
        while not stop.is_set():
            try:
                results.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _reader() -> None:
        try:
            for chunk in chunked(ordered, batch_size):
                if not _put(_make_batch(root, chunk, size)):
                    return
        except Exception as exc:  # pylint: disable=broad-except
            _put(exc)
            return
        _put(_DONE)

    thread = threading.Thread(target=_reader, name="tile-prefetch", daemon=True)
    thread.start()
    try:
        while True:
            item = results.get()
            if item is _DONE:
                break
            if isinstance(item, Exception):
                raise item
            yield item
    finally:
        stop.set()
        thread.join()
