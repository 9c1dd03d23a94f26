"""Model for Edge Squeeze Event."""

from dataclasses import dataclass
from typing import Any, Optional

from edge_squeeze.models.enums import EventType


@dataclass
class ToolkitEvent:
    """Representation of an Event emitted in/by the toolkit."""

    type: EventType
    object_id: Optional[str] = None  # run name, checkpoint path or dataset dir
    data: Optional[Any] = None  # optional data (such as the epoch record)
