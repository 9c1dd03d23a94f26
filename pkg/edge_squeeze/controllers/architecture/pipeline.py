"""The squeeze pipeline: baseline, strategy 1, channel reduction, fire modules."""
from __future__ import annotations

import logging
from dataclasses import replace
from typing import List, Optional, Tuple

from edge_squeeze.constants import (
    CALIBRATION_STEP,
    DEFAULT_DROPOUT_RATE,
    ENTRY_WIDTHS,
    FIRE_SQUEEZE_RATIO,
    MIN_CHANNELS,
    PARAM_TARGET,
    PARAM_TOLERANCE,
    SQUEEZED_ENTRY_WIDTHS,
    SQUEEZED_MIDDLE_WIDTH,
)
from edge_squeeze.models.architecture import ArchGraph, LedgerEntry
from edge_squeeze.models.enums import Flow
from edge_squeeze.models.errors import CalibrationError

from .builders import build_toy_baseline, build_xception_baseline
from .inference import count_params
from .passes import (
    PASS_CHANNEL_REDUCTION,
    PASS_FIRE,
    PASS_STRATEGY1,
    apply_channel_reduction,
    apply_strategy1,
    rewrite_fire_modules,
    round_channels,
)

ENTRY_DIVISOR = ENTRY_WIDTHS[0] / SQUEEZED_ENTRY_WIDTHS[0]
TOY_MIDDLE_DIVISOR = 2

LOGGER = logging.getLogger(__name__)


def squeeze_steps(
    baseline: ArchGraph,
    middle_width: int,
    entry_divisor: float = ENTRY_DIVISOR,
    ratio: float = FIRE_SQUEEZE_RATIO,
    name: Optional[str] = None,
) -> List[Tuple[str, ArchGraph]]:
    """Return the graph after every step of the squeeze pipeline, baseline first."""
    trunk = baseline.modules_in(Flow.MIDDLE)[0].out_channels
    steps = [("baseline", baseline)]
    graph = apply_strategy1(baseline)
    steps.append((PASS_STRATEGY1, graph))
    graph = apply_channel_reduction(
        graph, {Flow.ENTRY: entry_divisor, Flow.MIDDLE: trunk / middle_width}
    )
    steps.append((PASS_CHANNEL_REDUCTION, graph))
    graph = rewrite_fire_modules(graph, ratio)
    if name:
        graph = replace(graph, name=name)
    steps.append((PASS_FIRE, graph))
    return steps


def _within_tolerance(total: int, target: int, tolerance: float) -> bool:
    return abs(total - target) <= target * tolerance


def calibrate_middle_width(
    baseline: ArchGraph,
    target: int = PARAM_TARGET,
    tolerance: float = PARAM_TOLERANCE,
    start: int = SQUEEZED_MIDDLE_WIDTH,
    step: int = CALIBRATION_STEP,
) -> Tuple[int, int]:
    """
    Return (middle width, total) of the squeezed graph closest to the target.

    Starting at the default squeezed width, the middle width moves in steps
    toward the target for as long as the distance to the target shrinks.
    """
    trunk = baseline.modules_in(Flow.MIDDLE)[0].out_channels

    def total_for(width: int) -> int:
        return count_params(squeeze_steps(baseline, width)[-1][1]).total

    width, total = start, total_for(start)
    if not _within_tolerance(total, target, tolerance):
        direction = 1 if total < target else -1
        while MIN_CHANNELS <= width + direction * step <= trunk:
            candidate = width + direction * step
            candidate_total = total_for(candidate)
            if abs(candidate_total - target) >= abs(total - target):
                break
            width, total = candidate, candidate_total
    if not _within_tolerance(total, target, tolerance):
        raise CalibrationError(
            f"Squeezed model misses {target:,} +/- {tolerance:.0%} at middle width {width}",
            total,
        )
    LOGGER.info("Calibrated middle flow width %s: %s parameters", width, f"{total:,}")
    return width, total


def build_proposed(
    middle_width: Optional[int] = None, dropout_rate: float = DEFAULT_DROPOUT_RATE
) -> ArchGraph:
    """Return the squeezed model, calibrating the middle width when not given."""
    baseline = build_xception_baseline(dropout_rate)
    if middle_width is None:
        middle_width, _ = calibrate_middle_width(baseline)
    return squeeze_steps(baseline, middle_width, name="proposed")[-1][1]


def build_toy(
    width_divisor: int, input_size: int, dropout_rate: float = DEFAULT_DROPOUT_RATE
) -> ArchGraph:
    """Return the squeezed pipeline applied to a width-reduced baseline for small inputs."""
    baseline = build_toy_baseline(width_divisor, input_size, dropout_rate)
    trunk = baseline.modules_in(Flow.MIDDLE)[0].out_channels
    middle_width = max(MIN_CHANNELS, round_channels(trunk / TOY_MIDDLE_DIVISOR))
    return squeeze_steps(baseline, middle_width, name=f"toy_d{width_divisor}")[-1][1]


def squeeze_ledger(baseline: ArchGraph, middle_width: int) -> List[LedgerEntry]:
    """Return the parameter total after each squeeze step with the change to the previous."""
    ledger: List[LedgerEntry] = []
    previous = None
    for step, graph in squeeze_steps(baseline, middle_width):
        total = count_params(graph).total
        ledger.append(LedgerEntry(step, total, 0 if previous is None else total - previous))
        previous = total
    return ledger
