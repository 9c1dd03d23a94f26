"""Resource probes: process memory through psutil, Jetson power and load through sysfs."""
from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import psutil

from edge_squeeze.constants import BYTES_PER_GB
from edge_squeeze.models.enums import Probe

LOGGER = logging.getLogger(__name__)

# INA3221 rails report mW directly on older kernels, mV/mA pairs through hwmon on newer ones
POWER_GLOBS = ("bus/i2c/drivers/ina3221x/*/iio:device*/in_power*_input",)
HWMON_GLOB = "bus/i2c/drivers/ina3221/*/hwmon/hwmon*"
# gpu load in tenths of a percent
ACCEL_LOAD_FILES = ("devices/gpu.0/load", "devices/platform/gpu.0/load")


def _read_number(path: Path) -> Optional[float]:
    try:
        return float(path.read_text(encoding="ascii").strip())
    except (OSError, ValueError):
        return None


class ProcessMemoryProbe:
    """Resident set size of a process in GB (2^30 bytes)."""

    name = Probe.PROCESS_MEMORY

    def __init__(self, pid: Optional[int] = None) -> None:
        """Initialize."""
        self.process = psutil.Process(pid or os.getpid())

    @property
    def available(self) -> bool:
        """Return if the probe can be read."""
        return True

    def read(self) -> float:
        """Return the resident memory in GB."""
        return self.process.memory_info().rss / BYTES_PER_GB


class PlatformPowerProbe:
    """Total board power in W summed over the INA3221 rails."""

    name = Probe.PLATFORM_POWER

    def __init__(self, sysfs_root: Union[str, Path] = "/sys") -> None:
        """Initialize."""
        root = Path(sysfs_root)
        self.power_files: List[Path] = sorted(
            path for pattern in POWER_GLOBS for path in root.glob(pattern)
        )
        self.rail_pairs = []
        for hwmon in sorted(root.glob(HWMON_GLOB)):
            for volt in sorted(hwmon.glob("in*_input")):
                curr = hwmon / volt.name.replace("in", "curr", 1)
                if curr.is_file():
                    self.rail_pairs.append((volt, curr))

    @property
    def available(self) -> bool:
        """Return if any power rail was found."""
        return bool(self.power_files or self.rail_pairs)

    def read(self) -> Optional[float]:
        """Return the summed power in W, None when no rail could be read."""
        readings = [_read_number(x) for x in self.power_files]
        milliwatts = [x for x in readings if x is not None]
        for volt, curr in self.rail_pairs:
            millivolts, milliamps = _read_number(volt), _read_number(curr)
            if millivolts is not None and milliamps is not None:
                milliwatts.append(millivolts * milliamps / 1000.0)
        if not milliwatts:
            return None
        return sum(milliwatts) / 1000.0


class PlatformAccelProbe:
    """Integrated gpu utilization in percent."""

    name = Probe.PLATFORM_ACCEL

    def __init__(self, sysfs_root: Union[str, Path] = "/sys") -> None:
        """Initialize."""
        root = Path(sysfs_root)
        self.load_file = next(
            (root / x for x in ACCEL_LOAD_FILES if (root / x).is_file()), None
        )

    @property
    def available(self) -> bool:
        """Return if the load file was found."""
        return self.load_file is not None

    def read(self) -> Optional[float]:
        """Return the utilization in percent."""
        if self.load_file is None:
            return None
        value = _read_number(self.load_file)
        return None if value is None else value / 10.0


def build_probes(
    probes: Sequence[Probe], sysfs_root: Union[str, Path] = "/sys"
) -> Dict[Probe, object]:
    """
    Create the requested probes that are available on this machine.

    Process memory is always sampled, unavailable platform probes are skipped
    with a warning so their fields stay absent.
    """
    result: Dict[Probe, object] = {Probe.PROCESS_MEMORY: ProcessMemoryProbe()}
    for probe in probes:
        if probe == Probe.PLATFORM_POWER:
            instance = PlatformPowerProbe(sysfs_root)
        elif probe == Probe.PLATFORM_ACCEL:
            instance = PlatformAccelProbe(sysfs_root)
        else:
            continue
        if instance.available:
            result[probe] = instance
        else:
            LOGGER.warning("Probe %s is not available on this platform", probe.value)
    return result
