"""Main Edge Squeeze class."""
from __future__ import annotations

import logging
from typing import Callable, List, Optional, Tuple, Union

from edge_squeeze.constants import ROOT_LOGGER_NAME
from edge_squeeze.controllers.architecture import ArchitectureController
from edge_squeeze.controllers.datasets import DatasetController
from edge_squeeze.controllers.detector import DetectorController
from edge_squeeze.controllers.runtime import RuntimeController
from edge_squeeze.controllers.telemetry import TelemetryController
from edge_squeeze.controllers.trainer import TrainerController
from edge_squeeze.models.config import RunConfig
from edge_squeeze.models.enums import EventType
from edge_squeeze.models.event import ToolkitEvent

EventCallBackType = Callable[[ToolkitEvent], None]
EventSubscriptionType = Tuple[
    EventCallBackType, Optional[Tuple[EventType]], Optional[Tuple[str]]
]


class EdgeSqueeze:
    """Main EdgeSqueeze object."""

    def __init__(self, config: Optional[RunConfig] = None) -> None:
        """
        Create an instance of EdgeSqueeze.

            config: merged run config (defaults when omitted).
        """
        self.config = config or RunConfig()
        self.logger = logging.getLogger(ROOT_LOGGER_NAME)
        self._listeners: List[EventSubscriptionType] = []
        self.closed = False

        # init controllers
        self.arch = ArchitectureController(self)
        self.runtime = RuntimeController(self)
        self.datasets = DatasetController(self)
        self.trainer = TrainerController(self)
        self.detector = DetectorController(self)
        self.telemetry = TelemetryController(self)

    def close(self) -> None:
        """Signal shutdown, later events are dropped."""
        self.signal_event(ToolkitEvent(EventType.SHUTDOWN))
        self.closed = True

    def signal_event(self, event: ToolkitEvent) -> None:
        """Signal event to subscribers, callbacks run synchronously in order."""
        if self.closed:
            return
        for cb_func, event_filter, id_filter in list(self._listeners):
            if not (event_filter is None or event.type in event_filter):
                continue
            if not (id_filter is None or event.object_id in id_filter):
                continue
            cb_func(event)

    def subscribe(
        self,
        cb_func: EventCallBackType,
        event_filter: Union[EventType, Tuple[EventType], None] = None,
        id_filter: Union[str, Tuple[str], None] = None,
    ) -> Callable:
        """
        Add callback to event listeners.

        Returns function to remove the listener.
            :param cb_func: callback function
            :param event_filter: Optionally only listen for these events
            :param id_filter: Optionally only listen for these id's (run name, path)
        """
        if isinstance(event_filter, EventType):
            event_filter = (event_filter,)
        if isinstance(id_filter, str):
            id_filter = (id_filter,)
        listener = (cb_func, event_filter, id_filter)
        self._listeners.append(listener)

        def remove_listener():
            self._listeners.remove(listener)

        return remove_listener

    def __enter__(self) -> "EdgeSqueeze":
        """Return self."""
        return self

    def __exit__(self, *exc) -> None:
        """Close on exit."""
        self.close()
