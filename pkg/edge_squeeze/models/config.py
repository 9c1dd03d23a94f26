"""Model for the Edge Squeeze runtime config."""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Tuple, Type, Union

from mashumaro import DataClassDictMixin, field_options
from mashumaro.exceptions import InvalidFieldValue, MissingField

from edge_squeeze.constants import (
    DEFAULT_DROPOUT_RATE,
    DEFAULT_GRID,
    DEFAULT_OVERLAP_THRESHOLD,
    DEFAULT_SPLIT_RATIO,
    DEFAULT_TARGET_COUNT,
    INPUT_SIZE,
)
from edge_squeeze.helpers.util import parse_grid, parse_ratio, try_parse_bool
from edge_squeeze.models.enums import DefectClass, Probe
from edge_squeeze.models.errors import ConfigError

ARCH_VARIANTS = ("baseline", "proposed", "toy")
RUN_KEYS = ("seed", "name")


# INI values arrive as strings, flags and to_dict() output as typed values.


def _int(value: Any) -> int:
    return int(value.strip()) if isinstance(value, str) else int(value)


def _float(value: Any) -> float:
    return float(value.strip()) if isinstance(value, str) else float(value)


def _bool(value: Any) -> bool:
    return try_parse_bool(value.strip() if isinstance(value, str) else value)


def _optional_int(value: Any) -> Optional[int]:
    if value is None or (isinstance(value, str) and not value.strip()):
        return None
    return _int(value)


def _ratio(value: Any) -> Tuple[int, int, int]:
    return parse_ratio(value) if isinstance(value, str) else tuple(int(x) for x in value)


def _grid(value: Any) -> Tuple[int, int]:
    return parse_grid(value) if isinstance(value, str) else tuple(int(x) for x in value)


def _members(enum_cls: Type) -> Callable[[Any], tuple]:
    """Return a parser of comma separated (or listed) enum members."""
    parse = getattr(enum_cls, "parse", enum_cls)

    def parse_members(value: Any) -> tuple:
        items = value.split(",") if isinstance(value, str) else value
        return tuple(
            parse(x.strip() if isinstance(x, str) else x)
            for x in items
            if not isinstance(x, str) or x.strip()
        )

    return parse_members


def _option(default: Any, parser: Callable[[Any], Any]) -> Any:
    """Return a dataclass field that from_dict coerces through parser."""
    return field(default=default, metadata=field_options(deserialize=parser))


@dataclass(frozen=True)
class ArchConfig(DataClassDictMixin):
    """Which architecture a run builds."""

    variant: str = "proposed"
    # toy variant: proposed widths divided by this, on a smaller input
    toy_width_divisor: int = _option(8, _int)
    toy_input_size: int = _option(32, _int)

    def __post_init__(self):
        """Validate values."""
        if self.variant not in ARCH_VARIANTS:
            raise ConfigError(f"Unknown architecture variant: {self.variant}")
        if self.toy_width_divisor < 1 or self.toy_input_size < 32:
            raise ConfigError("toy_width_divisor must be >= 1 and toy_input_size >= 32")


@dataclass(frozen=True)
class DatasetConfig(DataClassDictMixin):
    """Settings for tile dataset generation."""

    target_count: int = _option(DEFAULT_TARGET_COUNT, _int)
    ratio: Tuple[int, int, int] = _option(DEFAULT_SPLIT_RATIO, _ratio)
    holdout: Tuple[DefectClass, ...] = _option(
        (DefectClass.OPEN_CIRCUIT, DefectClass.SPUR), _members(DefectClass)
    )
    grid: Tuple[int, int] = _option(DEFAULT_GRID, _grid)
    overlap_threshold: float = _option(DEFAULT_OVERLAP_THRESHOLD, _float)
    tile_size: int = _option(INPUT_SIZE, _int)
    materialize: bool = _option(True, _bool)
    workers: int = _option(4, _int)
    seed: Optional[int] = _option(None, _optional_int)

    def __post_init__(self):
        """Validate values."""
        if self.target_count < 1:
            raise ConfigError("target_count must be positive")
        if len(self.ratio) != 3 or min(self.ratio) < 0 or sum(self.ratio) == 0:
            raise ConfigError(f"Invalid split ratio: {self.ratio}")
        if min(self.grid) < 1:
            raise ConfigError(f"Invalid grid: {self.grid}")
        if not 0.0 < self.overlap_threshold <= 1.0:
            raise ConfigError("overlap_threshold must be in (0, 1]")


@dataclass(frozen=True)
class TrainConfig(DataClassDictMixin):
    """Hyperparameters of a training run."""

    batch_size: int = _option(16, _int)
    epochs: int = _option(60, _int)
    optimizer: str = "adam"
    learning_rate: float = _option(1e-3, _float)
    beta1: float = _option(0.9, _float)
    beta2: float = _option(0.999, _float)
    dropout_rate: float = _option(DEFAULT_DROPOUT_RATE, _float)
    checkpoint_every: int = _option(5, _int)
    telemetry_interval: float = _option(1.0, _float)
    prefetch: int = _option(2, _int)
    seed: Optional[int] = _option(None, _optional_int)
    shuffle_seed: Optional[int] = _option(None, _optional_int)

    def __post_init__(self):
        """Validate values."""
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.optimizer != "adam":
            raise ConfigError(f"Unsupported optimizer: {self.optimizer}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")
        if self.telemetry_interval < 0.1:
            raise ConfigError("telemetry_interval must be >= 0.1 seconds")


@dataclass(frozen=True)
class DetectConfig(DataClassDictMixin):
    """Settings for grid based detection."""

    grid: Tuple[int, int] = _option(DEFAULT_GRID, _grid)
    threshold: float = _option(0.5, _float)

    def __post_init__(self):
        """Validate values."""
        if min(self.grid) < 1:
            raise ConfigError(f"Invalid grid: {self.grid}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must be in [0, 1]")


@dataclass(frozen=True)
class TelemetryConfig(DataClassDictMixin):
    """Settings for the resource sampler."""

    probes: Tuple[Probe, ...] = _option(
        (Probe.PROCESS_MEMORY, Probe.PLATFORM_POWER, Probe.PLATFORM_ACCEL),
        _members(Probe),
    )
    enabled: bool = _option(True, _bool)


SECTIONS = {
    "arch": ArchConfig,
    "dataset": DatasetConfig,
    "train": TrainConfig,
    "detect": DetectConfig,
    "telemetry": TelemetryConfig,
}


def _check_keys(section: str, keys, known) -> None:
    for key in keys:
        if key not in known:
            raise ConfigError(f"Unknown config key '{key}' in section [{section}]")


@dataclass(frozen=True)
class RunConfig(DataClassDictMixin):
    """Merged view of defaults, config file and flags for one invocation."""

    seed: int = _option(42, _int)
    name: str = "proposed"
    arch: ArchConfig = field(default_factory=ArchConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    detect: DetectConfig = field(default_factory=DetectConfig)
    telemetry: TelemetryConfig = field(default_factory=TelemetryConfig)

    def __post_init__(self):
        """Derive unset component seeds from the run seed."""
        if self.dataset.seed is None:
            super().__setattr__("dataset", dataclasses.replace(self.dataset, seed=self.seed))
        if self.train.seed is None or self.train.shuffle_seed is None:
            train = dataclasses.replace(
                self.train,
                seed=self.seed if self.train.seed is None else self.train.seed,
                shuffle_seed=(
                    self.seed + 1
                    if self.train.shuffle_seed is None
                    else self.train.shuffle_seed
                ),
            )
            super().__setattr__("train", train)

    @classmethod
    def load(
        cls,
        path: Optional[Union[str, Path]] = None,
        overrides: Optional[Mapping[str, Mapping[str, Any]]] = None,
    ) -> "RunConfig":
        """
        Create RunConfig from an (optional) INI file and flag overrides.

            :param path: config file with [run]/[arch]/[dataset]/... sections.
            :param overrides: {section: {key: value}}, flags win over the file.
        """
        values: Dict[str, Dict[str, Any]] = {"run": {}}
        if path is not None:
            parser = configparser.ConfigParser()
            try:
                with open(path, encoding="utf-8") as _file:
                    parser.read_file(_file)
            except (OSError, configparser.Error) as err:
                raise ConfigError(f"Unable to read config file {path}: {err}") from err
            for section in parser.sections():
                values.setdefault(section, {}).update(parser[section])
        for section, section_values in (overrides or {}).items():
            values.setdefault(section, {}).update(
                {key: val for key, val in section_values.items() if val is not None}
            )
        raw = values.pop("run")
        _check_keys("run", raw, RUN_KEYS)
        for section, section_values in values.items():
            if section not in SECTIONS:
                raise ConfigError(f"Unknown config section [{section}]")
            known = {x.name for x in dataclasses.fields(SECTIONS[section])}
            _check_keys(section, section_values, known)
            raw[section] = section_values
        try:
            return cls.from_dict(raw)
        except (InvalidFieldValue, MissingField, TypeError, ValueError) as err:
            raise ConfigError(f"Invalid configuration: {err}") from err

    def to_ini(self) -> str:
        """Return every effective value as INI text (the config echo)."""
        lines = ["[run]", f"seed = {self.seed}", f"name = {self.name}", ""]
        for section in SECTIONS:
            lines.append(f"[{section}]")
            section_obj = getattr(self, section)
            for fld in dataclasses.fields(section_obj):
                lines.append(f"{fld.name} = {_format_value(getattr(section_obj, fld.name))}")
            lines.append("")
        return "\n".join(lines)


def _format_value(value: Any) -> str:
    """Format a config value the way the INI reader parses it back."""
    if isinstance(value, tuple):
        if len(value) == 3 and all(isinstance(x, int) for x in value):
            return ":".join(str(x) for x in value)
        if len(value) == 2 and all(isinstance(x, int) for x in value):
            return f"{value[0]}x{value[1]}"
        return ",".join(getattr(x, "value", str(x)) for x in value)
    if hasattr(value, "value"):
        return value.value
    if value is None:
        return ""
    return str(value)
