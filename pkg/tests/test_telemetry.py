"""Tests for resource probes, the sampler and telemetry aggregation."""

import time

from pytest import approx, raises

from edge_squeeze.controllers.telemetry.aggregate import (
    aggregate,
    aggregate_csv,
    aggregate_table,
    compare_runs,
    read_samples,
    summary_row,
    write_samples,
)
from edge_squeeze.controllers.telemetry.probes import build_probes
from edge_squeeze.controllers.telemetry.sampler import Sampler
from edge_squeeze.models.enums import EventType, Probe
from edge_squeeze.models.errors import EdgeSqueezeError, SamplerError
from edge_squeeze.models.event import ToolkitEvent
from edge_squeeze.models.telemetry import EpochMark, RunSummary, TelemetryRun, TelemetrySample
from edge_squeeze.toolkit import EdgeSqueeze

from .conftest import make_config


def _fake_sysfs(root):
    rails = root / "bus/i2c/drivers/ina3221x/6-0040/iio:device0"
    rails.mkdir(parents=True)
    (rails / "in_power0_input").write_text("1500\n")
    (rails / "in_power1_input").write_text("2500\n")
    (rails / "in_power2_input").write_text("garbage\n")
    gpu = root / "devices/gpu.0"
    gpu.mkdir(parents=True)
    (gpu / "load").write_text("437\n")
    return root


def _run():
    return TelemetryRun(
        name="toy",
        samples=[
            TelemetrySample(0.0, 1.0),
            TelemetrySample(1.5, 2.0, util_pct=50.0, epoch=1),
            TelemetrySample(2.5, 4.0, epoch=1),
            TelemetrySample(3.5, 3.0, power_w=5.0, epoch=2),
        ],
        marks=[EpochMark(1, 1.0), EpochMark(2, 3.0)],
        stopped_at=4.5,
    )


def test_build_probes(tmp_path):
    """Test platform probes read the Jetson style sysfs files."""
    probes = build_probes(
        (Probe.PROCESS_MEMORY, Probe.PLATFORM_POWER, Probe.PLATFORM_ACCEL),
        _fake_sysfs(tmp_path),
    )
    assert set(probes) == set(Probe)
    assert probes[Probe.PLATFORM_POWER].read() == 4.0
    assert probes[Probe.PLATFORM_ACCEL].read() == approx(43.7)
    assert probes[Probe.PROCESS_MEMORY].read() > 0
    # missing platform files drop the probe, memory is always sampled
    probes = build_probes((Probe.PLATFORM_POWER,), tmp_path / "empty")
    assert list(probes) == [Probe.PROCESS_MEMORY]


def test_sampler_lifecycle():
    """Test a sampler runs once and tags samples with the current epoch."""
    with raises(SamplerError):
        Sampler(build_probes(()), interval=0.05)
    with raises(SamplerError):
        Sampler({})
    sampler = Sampler(build_probes(()), interval=0.1, name="toy")
    with raises(SamplerError):
        sampler.stop()
    sampler.start()
    assert sampler.running
    with raises(SamplerError):
        sampler.start()
    sampler.mark_epoch(1)
    time.sleep(0.35)
    run = sampler.stop()
    assert not sampler.running
    assert sampler.stop() is run
    assert len(run.samples) >= 2
    assert run.samples[-1].epoch == 1
    assert [x.epoch for x in run.marks] == [1]
    assert all(x.util_pct is None and x.power_w is None for x in run.samples)
    assert run.probes == ("process_memory",)


def test_aggregate():
    """Test per-epoch rows, the pre-epoch row and weighted whole-run averages."""
    result = aggregate(_run())
    assert [x.label for x in result.epochs] == ["-", "1", "2"]
    assert [x.samples for x in result.epochs] == [1, 2, 1]
    first = result.epochs[1]
    assert (first.avg_mem_gb, first.max_mem_gb, first.avg_util_pct) == (3.0, 4.0, 50.0)
    assert first.avg_power_w is None
    assert first.seconds == 2.0
    assert result.epochs[0].seconds is None
    assert result.total.avg_mem_gb == 2.5
    assert result.total.avg_mem_gb == approx(
        sum(x.avg_mem_gb * x.samples for x in result.epochs) / result.total.samples
    )
    assert result.total.seconds == 3.5
    assert result.avg_epoch_seconds == 1.75
    lines = aggregate_csv(result).splitlines()
    assert lines[0] == "epoch,samples,avg_mem_gb,max_mem_gb,avg_util_pct,avg_power_w,seconds"
    assert lines[2] == "1,2,3.0000,4.0000,50.0000,,2.0000"
    assert lines[-1].startswith("all,4,2.5000")
    table = aggregate_table(result)
    assert table.startswith("toy\n")
    assert table.splitlines()[-1].startswith("all")
    with raises(SamplerError):
        aggregate(TelemetryRun())


def test_samples_csv(tmp_path):
    """Test telemetry.csv reads back to the same samples."""
    run = _run()
    path = write_samples(run, tmp_path / "telemetry.csv")
    loaded = read_samples(path)
    assert loaded.samples == run.samples
    assert loaded.name == tmp_path.name
    assert loaded.marks == run.marks
    assert loaded.stopped_at == run.stopped_at
    assert (tmp_path / "telemetry_marks.csv").is_file()
    # aggregates recompute byte identical from the files
    assert aggregate_csv(aggregate(loaded)) == aggregate_csv(aggregate(run))
    (tmp_path / "telemetry_marks.csv").unlink()
    assert not read_samples(path).marks
    path.write_text("a,b\n1,2\n")
    with raises(SamplerError):
        read_samples(path)


def test_compare_runs():
    """Test the cross-run table is ordered by name with empty absent cells."""
    usage = aggregate(_run())
    rows = [
        summary_row("squeezed", {"params": 11114793, "train_acc": 0.9, "test_acc": 0.85}, usage),
        summary_row("baseline", {"params": 20809001, "avg_epoch_seconds": 12.5}),
    ]
    assert rows[0].avg_epoch_seconds == 1.75
    assert rows[1] == RunSummary("baseline", params=20809001, avg_epoch_seconds=12.5)
    csv_body, text = compare_runs(rows)
    lines = csv_body.splitlines()
    assert lines[0].startswith("model,params,train_acc,test_acc")
    assert lines[1] == "baseline,20809001,,,12.5000,,,"
    assert lines[2].startswith("squeezed,11114793,0.9000,0.8500,1.7500,2.5000,50.0000,5.0000")
    assert text.splitlines()[2].startswith("baseline")


def test_session_writes_files(tmp_path):
    """Test a telemetry session tags epochs from events and writes its files."""
    config = make_config(
        telemetry={"enabled": True, "probes": "process_memory"},
        train={"telemetry_interval": 0.1},
    )
    with EdgeSqueeze(config) as toolkit:
        with toolkit.telemetry.session(tmp_path) as sampler:
            assert sampler.running
            started = []
            for epoch in (1, 2):
                started.append(time.monotonic())
                toolkit.signal_event(ToolkitEvent(EventType.EPOCH_STARTED, "toy", epoch))
                time.sleep(0.25)
        run = read_samples(tmp_path / "telemetry.csv")
        # epoch durations reconcile with the wall clock
        assert run.epoch_durations()[1] == approx(started[1] - started[0], rel=0.01)
        assert {x.epoch for x in run.samples} <= {None, 1, 2}
        assert run.samples[-1].epoch == 2
        assert (tmp_path / "report.txt").read_text().startswith(config.name)
        summary = toolkit.telemetry.load_run(tmp_path)
        assert summary.name == tmp_path.name
        assert summary.avg_mem_gb > 0
        with raises(EdgeSqueezeError):
            toolkit.telemetry.load_run(tmp_path / "missing")
    # disabled telemetry yields no sampler and writes nothing
    with EdgeSqueeze(make_config()) as toolkit:
        with toolkit.telemetry.session(tmp_path / "off") as sampler:
            assert sampler is None
    assert not (tmp_path / "off").exists()
