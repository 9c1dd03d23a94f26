"""Utilities for image decoding, resizing and encoding."""
from __future__ import annotations

from io import BytesIO
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from edge_squeeze.helpers.geometry import Window


def open_image(path: Union[str, Path]) -> Image.Image:
    """Open an image file as RGB."""
    with Image.open(path) as img:
        img.load()
        return img.convert("RGB")


def crop_and_resize(img: Image.Image, window: Window, size: int) -> Image.Image:
    """Crop a pixel window and resize it to a size x size tile."""
    tile = img.crop(window.as_tuple())
    if tile.size != (size, size):
        tile = tile.resize((size, size), Image.Resampling.BILINEAR)
    return tile


def to_chw_array(img: Image.Image, size: int) -> np.ndarray:
    """Return a float32 CHW array scaled to [0, 1] (resized when needed)."""
    if img.mode != "RGB":
        img = img.convert("RGB")
    if img.size != (size, size):
        img = img.resize((size, size), Image.Resampling.BILINEAR)
    data = np.asarray(img, dtype=np.float32) / 255.0
    return np.ascontiguousarray(data.transpose(2, 0, 1))


def encode_png(img: Image.Image) -> bytes:
    """Return lossless PNG bytes of an image."""
    data = BytesIO()
    img.save(data, format="png")
    return data.getvalue()
