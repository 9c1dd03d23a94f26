"""Models for resource samples and their aggregates."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from mashumaro import DataClassDictMixin


@dataclass(frozen=True)
class TelemetrySample(DataClassDictMixin):
    """One reading of the probes, t in monotonic seconds since sampler start."""

    t: float
    mem_gb: float
    util_pct: Optional[float] = None
    power_w: Optional[float] = None
    epoch: Optional[int] = None


@dataclass(frozen=True)
class EpochMark(DataClassDictMixin):
    """Time at which an epoch started."""

    epoch: int
    t: float


@dataclass
class TelemetryRun(DataClassDictMixin):
    """Samples of one sampling session with the epoch start marks."""

    name: str = "run"
    samples: List[TelemetrySample] = field(default_factory=list)
    marks: List[EpochMark] = field(default_factory=list)
    stopped_at: Optional[float] = None
    interval: float = 1.0
    probes: Tuple[str, ...] = ()

    def epoch_durations(self) -> Dict[int, float]:
        """Return seconds per marked epoch: next mark (or stop time) minus its mark."""
        result = {}
        for idx, mark in enumerate(self.marks):
            if idx + 1 < len(self.marks):
                end = self.marks[idx + 1].t
            elif self.stopped_at is not None:
                end = self.stopped_at
            else:
                continue
            result[mark.epoch] = end - mark.t
        return result


@dataclass(frozen=True)
class UsageAggregate(DataClassDictMixin):
    """Averages over a group of samples, absent probes stay None."""

    label: str
    samples: int
    avg_mem_gb: float
    max_mem_gb: float
    avg_util_pct: Optional[float] = None
    avg_power_w: Optional[float] = None
    seconds: Optional[float] = None


@dataclass(frozen=True)
class RunAggregate(DataClassDictMixin):
    """Per-epoch rows plus the whole-run row of a telemetry run."""

    name: str
    epochs: Tuple[UsageAggregate, ...]
    total: UsageAggregate
    avg_epoch_seconds: Optional[float] = None


@dataclass(frozen=True)
class RunSummary(DataClassDictMixin):
    """One row of the cross-run comparison."""

    name: str
    params: Optional[int] = None
    train_acc: Optional[float] = None
    test_acc: Optional[float] = None
    avg_epoch_seconds: Optional[float] = None
    avg_mem_gb: Optional[float] = None
    avg_util_pct: Optional[float] = None
    avg_power_w: Optional[float] = None
