"""Assemble the balanced, split tile dataset from annotated boards."""
from __future__ import annotations

import asyncio
import dataclasses
import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import aiofiles
import numpy as np

from edge_squeeze.constants import HOLDOUT_FILE, MANIFEST_FILE
from edge_squeeze.helpers.images import open_image
from edge_squeeze.helpers.json import async_json_lines, content_digest, json_serializer
from edge_squeeze.helpers.util import split_counts
from edge_squeeze.models.config import DatasetConfig
from edge_squeeze.models.dataset import (
    SPLIT_ORDER,
    AnnotatedImage,
    DatasetManifest,
    HoldoutEntry,
    TileRecord,
)
from edge_squeeze.models.enums import Split
from edge_squeeze.models.errors import DatasetError, InsufficientTilesError

from .tiling import render_tiles, tile_image

LOGGER = logging.getLogger(__name__)

DATASET_DIR = "dataset"


def config_digest(config: DatasetConfig) -> str:
    """Return the digest of the settings that determine the manifest content."""
    values = config.to_dict()
    values.pop("workers", None)
    values.pop("materialize", None)
    return content_digest(json_serializer(values))


def tile_path(tile: TileRecord) -> str:
    """Return the tile file path relative to the output directory."""
    return (
        f"{DATASET_DIR}/{tile.split.value}/{tile.label}/"
        f"{tile.source_image}_r{tile.row}_c{tile.col}.png"
    )


def partition_holdout(
    images: Sequence[AnnotatedImage], holdout: Sequence
) -> Tuple[List[AnnotatedImage], List[HoldoutEntry]]:
    """Split images into usable ones and those bearing any held out class."""
    usable, excluded = [], []
    for image in images:
        held = [x for x in image.classes() if x in holdout]
        if not held:
            usable.append(image)
            continue
        excluded.append(
            HoldoutEntry(
                image_id=image.image_id,
                image_path=image.image_path,
                width=image.width,
                height=image.height,
                classes=tuple(held),
                boxes=image.boxes,
            )
        )
    return usable, excluded


def select_tiles(
    tiles_by_image: Dict[str, List[TileRecord]],
    target_count: int,
    ratio: Sequence[int],
    seed: int,
) -> List[TileRecord]:
    """
    Assign whole source images to splits and pick a balanced tile set per split.

    Images are visited in a seeded order and fill train, then val, then test until
    each split holds enough positive and negative tiles for its half/half quota.
    Each split then draws its quota from its pools without replacement.
    """
    rng = np.random.default_rng(seed)
    sizes = dict(zip(SPLIT_ORDER, split_counts(target_count, ratio)))
    quotas = {split: (size // 2, size - size // 2) for split, size in sizes.items()}
    image_ids = sorted(tiles_by_image)
    order = [image_ids[idx] for idx in rng.permutation(len(image_ids))]
    total_pos = sum(x.label for tiles in tiles_by_image.values() for x in tiles)
    total_neg = sum(len(tiles) for tiles in tiles_by_image.values()) - total_pos

    pools: Dict[Split, Tuple[List[TileRecord], List[TileRecord]]] = {}
    cursor = 0
    reached = 0
    for split in SPLIT_ORDER:
        pos_quota, neg_quota = quotas[split]
        positives: List[TileRecord] = []
        negatives: List[TileRecord] = []
        while len(positives) < pos_quota or len(negatives) < neg_quota:
            if cursor == len(order):
                reached += min(len(positives), pos_quota) + min(len(negatives), neg_quota)
                achievable = min(2 * min(total_pos, total_neg), reached)
                raise InsufficientTilesError(
                    f"Source images can not fill the {split.value} split of a "
                    f"{target_count} tile dataset ({total_pos} positive and "
                    f"{total_neg} negative tiles available)",
                    achievable,
                )
            for tile in tiles_by_image[order[cursor]]:
                (positives if tile.label else negatives).append(tile)
            cursor += 1
        pools[split] = (positives, negatives)
        reached += sizes[split]

    selected: List[TileRecord] = []
    for split in SPLIT_ORDER:
        picked: List[TileRecord] = []
        for pool, quota in zip(pools[split], quotas[split]):
            pool.sort(key=lambda x: x.sort_key)
            picked += [pool[idx] for idx in rng.choice(len(pool), size=quota, replace=False)]
        picked.sort(key=lambda x: x.sort_key)
        for tile in picked:
            tile = dataclasses.replace(tile, split=split)
            selected.append(dataclasses.replace(tile, path=tile_path(tile)))
    return selected


def _materialize_image(
    image: AnnotatedImage, tiles: List[TileRecord], out_dir: Path, size: int
) -> int:
    """Write the PNG files of the selected tiles of one board image."""
    try:
        img = open_image(image.image_path)
    except OSError as err:
        raise DatasetError(f"Can not read source image {image.image_path}: {err}") from err
    if img.size != (image.width, image.height):
        raise DatasetError(
            f"Image {image.image_path} is {img.width}x{img.height}, "
            f"annotated as {image.width}x{image.height}"
        )
    for tile, data in render_tiles(img, tiles, size):
        path = out_dir / tile.path
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    return len(tiles)


async def materialize_tiles(
    images: Sequence[AnnotatedImage],
    tiles: Sequence[TileRecord],
    out_dir: Path,
    size: int,
    workers: int,
) -> int:
    """Write all selected tiles, fanning out per source image on a thread pool."""
    by_image: Dict[str, List[TileRecord]] = defaultdict(list)
    for tile in tiles:
        by_image[tile.source_image].append(tile)
    lookup = {x.image_id: x for x in images}
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        counts = await asyncio.gather(
            *(
                loop.run_in_executor(
                    executor, _materialize_image, lookup[image_id], image_tiles, out_dir, size
                )
                for image_id, image_tiles in sorted(by_image.items())
            )
        )
    return sum(counts)


async def write_lines(path: Path, records) -> None:
    """Write records as json lines."""
    text = await async_json_lines(records)
    async with aiofiles.open(path, "w", encoding="utf-8") as _file:
        await _file.write(text)


async def generate_dataset(
    images: Sequence[AnnotatedImage], config: DatasetConfig, out_dir: Path
) -> DatasetManifest:
    """
    Generate the tile dataset for annotated images into out_dir.

    Writes manifest.jsonl and holdout.jsonl, plus dataset/{split}/{label}/*.png
    when config.materialize is set. The manifest is a pure function of the
    annotations and the config (worker count and materialize excluded).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not images:
        raise DatasetError("No annotated images to generate a dataset from")
    usable, excluded = partition_holdout(images, config.holdout)
    LOGGER.info(
        "Using %s of %s source images, %s held out for classes %s",
        len(usable),
        len(images),
        len(excluded),
        ", ".join(x.value for x in config.holdout) or "-",
    )
    tiles_by_image = {
        image.image_id: tile_image(image, config.grid, config.overlap_threshold)
        for image in usable
    }
    tiles = select_tiles(tiles_by_image, config.target_count, config.ratio, config.seed)
    manifest = DatasetManifest(
        seed=config.seed,
        config_digest=config_digest(config),
        tiles=tiles,
        target_count=config.target_count,
        ratio=config.ratio,
        grid=config.grid,
        overlap_threshold=config.overlap_threshold,
        tile_size=config.tile_size,
        holdout=config.holdout,
        source_count=len(usable),
    )
    if config.materialize:
        written = await materialize_tiles(usable, tiles, out_dir, config.tile_size, config.workers)
        LOGGER.debug("Materialized %s tiles under %s", written, out_dir / DATASET_DIR)
    async with aiofiles.open(out_dir / MANIFEST_FILE, "w", encoding="utf-8") as _file:
        await _file.write(manifest.to_text())
    await write_lines(out_dir / HOLDOUT_FILE, excluded)
    return manifest
