"""Background sampler thread feeding probe readings through a queue."""
from __future__ import annotations

import logging
import queue
import threading
import time
from typing import Callable, Dict, List, Optional

from edge_squeeze.models.enums import Probe
from edge_squeeze.models.errors import SamplerError
from edge_squeeze.models.telemetry import EpochMark, TelemetryRun, TelemetrySample

LOGGER = logging.getLogger(__name__)

MIN_INTERVAL = 0.1


class Sampler:
    """
    Samples the probes every interval seconds until stopped.

    A sampler handle runs once: start it, tag epochs with mark_epoch and collect
    the TelemetryRun from stop.
    """

    def __init__(
        self,
        probes: Dict[Probe, object],
        interval: float = 1.0,
        name: str = "run",
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        """Initialize."""
        if interval < MIN_INTERVAL:
            raise SamplerError(f"Sampling interval must be >= {MIN_INTERVAL} s, got {interval}")
        if Probe.PROCESS_MEMORY not in probes:
            raise SamplerError("The process memory probe is required")
        self.probes = probes
        self.interval = interval
        self.name = name
        self._clock = clock
        self._queue: queue.SimpleQueue = queue.SimpleQueue()
        self._stop = threading.Event()
        self._lock = threading.Lock()
        self._thread: Optional[threading.Thread] = None
        self._start_time = 0.0
        self._epoch: Optional[int] = None
        self._marks: List[EpochMark] = []
        self._run: Optional[TelemetryRun] = None

    @property
    def running(self) -> bool:
        """Return if the sampling thread is active."""
        return self._thread is not None and self._run is None

    def _now(self) -> float:
        return self._clock() - self._start_time

    def _read(self) -> TelemetrySample:
        """Read all probes once, absent probes leave their field empty."""
        util = self.probes.get(Probe.PLATFORM_ACCEL)
        power = self.probes.get(Probe.PLATFORM_POWER)
        with self._lock:
            epoch = self._epoch
        return TelemetrySample(
            t=self._now(),
            mem_gb=self.probes[Probe.PROCESS_MEMORY].read(),
            util_pct=util.read() if util else None,
            power_w=power.read() if power else None,
            epoch=epoch,
        )

    def _loop(self) -> None:
        ticks = 0
        while True:
            self._queue.put(self._read())
            ticks += 1
            # fixed schedule, a slow probe read does not shift later samples
            delay = ticks * self.interval - self._now()
            if self._stop.wait(max(0.0, delay)):
                return

    def start(self) -> "Sampler":
        """Start sampling in a daemon thread."""
        if self._thread is not None:
            raise SamplerError(f"Sampler {self.name} was already started")
        self._start_time = self._clock()
        self._thread = threading.Thread(target=self._loop, name="telemetry-sampler", daemon=True)
        self._thread.start()
        LOGGER.debug(
            "Sampling %s every %.2f s", ", ".join(x.value for x in self.probes), self.interval
        )
        return self

    def mark_epoch(self, epoch: int) -> None:
        """Tag following samples with epoch and record its start time."""
        with self._lock:
            self._epoch = epoch
            self._marks.append(EpochMark(epoch, self._now()))

    def stop(self) -> TelemetryRun:
        """Stop sampling and return the collected run."""
        if self._thread is None:
            raise SamplerError(f"Sampler {self.name} was never started")
        if self._run is not None:
            return self._run
        self._stop.set()
        self._thread.join()
        stopped_at = self._now()
        samples = []
        while True:
            try:
                samples.append(self._queue.get_nowait())
            except queue.Empty:
                break
        self._run = TelemetryRun(
            name=self.name,
            samples=samples,
            marks=list(self._marks),
            stopped_at=stopped_at,
            interval=self.interval,
            probes=tuple(x.value for x in self.probes),
        )
        return self._run

    def __enter__(self) -> "Sampler":
        """Start on enter."""
        return self.start()

    def __exit__(self, *exc) -> None:
        """Stop on exit."""
        self.stop()
