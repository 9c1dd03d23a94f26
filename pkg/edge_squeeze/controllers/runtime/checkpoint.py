"""
Checkpoint file codec.

Layout, little-endian throughout:

    magic "ENFG" | u16 version | u32 header length | header json
    u32 blob count | blobs | sha256 of everything before it (32 bytes)

A blob is: u16 name length | name | u8 ndim | u32 dims... | float32 data.
The header holds the graph text and hash, the epoch, rng states and optimizer step.
Blob names are prefixed with their group: param/, buffer/, adam_m/ or adam_v/.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from edge_squeeze.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from edge_squeeze.models.errors import CorruptCheckpointError

BLOB_DTYPE = np.dtype("<f4")
DIGEST_SIZE = 32

GROUP_PARAM = "param"
GROUP_BUFFER = "buffer"
GROUP_ADAM_M = "adam_m"
GROUP_ADAM_V = "adam_v"


@dataclass
class CheckpointData:
    """Decoded content of a checkpoint file."""

    header: Dict[str, Any]
    blobs: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)

    def group(self, name: str) -> Dict[str, np.ndarray]:
        """Return the blobs of one group by their name."""
        return self.blobs.get(name, {})


def encode_checkpoint(header: Dict[str, Any], groups: Dict[str, Dict[str, np.ndarray]]) -> bytes:
    """Return the checkpoint bytes for a header and named blob groups."""
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts: List[bytes] = [
        CHECKPOINT_MAGIC,
        struct.pack("<HI", CHECKPOINT_VERSION, len(header_bytes)),
        header_bytes,
    ]
    blobs: List[Tuple[str, np.ndarray]] = [
        (f"{group}/{name}", array)
        for group, arrays in groups.items()
        for name, array in arrays.items()
    ]
    parts.append(struct.pack("<I", len(blobs)))
    for name, array in blobs:
        name_bytes = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack(f"<B{array.ndim}I", array.ndim, *array.shape))
        parts.append(np.ascontiguousarray(array, dtype=BLOB_DTYPE).tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


class _Reader:
    """Bounds checked reader over checkpoint bytes."""

    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CorruptCheckpointError(
                f"Checkpoint truncated: need {size} bytes at offset {self.offset}"
            )
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(data: bytes) -> CheckpointData:
    """Parse checkpoint bytes, raising CorruptCheckpointError on any defect."""
    if len(data) < len(CHECKPOINT_MAGIC) + DIGEST_SIZE or data[:4] != CHECKPOINT_MAGIC:
        raise CorruptCheckpointError("Not a checkpoint file (bad magic)")
    body, digest = data[:-DIGEST_SIZE], data[-DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptCheckpointError("Checkpoint checksum mismatch (truncated or modified)")
    reader = _Reader(body)
    reader.take(len(CHECKPOINT_MAGIC))
    version, header_len = reader.unpack("<HI")
    if version != CHECKPOINT_VERSION:
        raise CorruptCheckpointError(f"Unsupported checkpoint version {version}")
    try:
        header = json.loads(reader.take(header_len).decode("utf-8"))
    except ValueError as err:
        raise CorruptCheckpointError(f"Checkpoint header is not valid json: {err}") from err
    result = CheckpointData(header)
    (count,) = reader.unpack("<I")
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I")
        size = int(np.prod(shape)) if ndim else 1
        array = np.frombuffer(reader.take(size * BLOB_DTYPE.itemsize), dtype=BLOB_DTYPE)
        group, _, key = name.partition("/")
        result.blobs.setdefault(group, {})[key] = array.reshape(shape).astype(np.float32)
    if reader.offset != len(body):
        raise CorruptCheckpointError("Checkpoint has trailing data after the last blob")
    return result


def write_checkpoint(path: Union[str, Path], payload: bytes) -> None:
    """Write checkpoint bytes atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_name(path.name + ".tmp")
    tmp_path.write_bytes(payload)
    os.replace(tmp_path, path)


def read_checkpoint(path: Union[str, Path]) -> CheckpointData:
    """Read and decode a checkpoint file."""
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError as err:
        raise CorruptCheckpointError(f"Checkpoint not found: {path}") from err
    return decode_checkpoint(data)


def optimizer_groups(state: Optional[dict]) -> Dict[str, Dict[str, np.ndarray]]:
    """Return the blob groups of an Adam state dict."""
    if not state:
        return {}
    return {GROUP_ADAM_M: state["m"], GROUP_ADAM_V: state["v"]}
