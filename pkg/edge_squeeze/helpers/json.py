"""Helpers for (canonical) json serialization."""
from __future__ import annotations

import asyncio
import hashlib
import json
from enum import Enum


def serialize_values(obj):
    """Recursively create serializable values for (custom) data types."""

    def get_val(val):
        if isinstance(val, (list, set, tuple)):
            return [get_val(x) for x in val] if val else []
        if isinstance(val, dict):
            return {key: get_val(value) for key, value in val.items()}
        if isinstance(val, Enum):
            return val.value
        try:
            return get_val(val.to_dict())
        except AttributeError:
            return val

    return get_val(obj)


def json_serializer(data) -> str:
    """Return canonical (sorted, compact) json for custom data types."""
    return json.dumps(
        serialize_values(data), sort_keys=True, separators=(",", ":"), allow_nan=False
    )


def json_lines(records) -> str:
    """Return one canonical json document per line."""
    return "".join(json_serializer(record) + "\n" for record in records)


async def async_json_lines(records) -> str:
    """Run json lines serializer in executor for large data."""
    if isinstance(records, list) and len(records) > 100:
        return await asyncio.get_running_loop().run_in_executor(None, json_lines, records)
    return json_lines(records)


def content_digest(text: str) -> str:
    """Return the sha256 hex digest of a text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
