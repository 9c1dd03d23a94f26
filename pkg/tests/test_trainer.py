"""Tests for the training loop, evaluation and metrics history."""

import json

import numpy as np
from pytest import raises

from edge_squeeze.models.enums import EventType, Split
from edge_squeeze.models.errors import EdgeSqueezeError, EmptySplitError, TrainingDivergedError
from edge_squeeze.models.history import EpochRecord, TrainHistory, emit_history, read_history
from edge_squeeze.toolkit import EdgeSqueeze

from .conftest import make_config, write_tile_dataset


def _train(tmp_path, out_dir, manifest, resume=False, stop_after=None, **train):
    config = make_config(train={"batch_size": 4, "seed": 1, "prefetch": 0, **train})
    events = []
    with EdgeSqueeze(config) as toolkit:
        toolkit.subscribe(events.append)
        model = toolkit.runtime.compile(toolkit.arch.build())
        history = toolkit.trainer.train(
            model, manifest, tmp_path, out_dir, resume=resume, stop_after=stop_after
        )
    return model, history, events


def _without_seconds(history):
    return [x.to_dict() | {"seconds": 0} for x in history.records]


def test_toy_model_overfits(tmp_path):
    """Test the toy model learns to separate bright and dark tiles."""
    manifest = write_tile_dataset(tmp_path, {Split.TRAIN: 32})
    _, history, _ = _train(
        tmp_path, tmp_path / "run", manifest, batch_size=16, epochs=40, learning_rate=3e-3
    )
    assert len(history) == 40
    assert history.last.val_acc is None
    assert history.last.train_acc >= 0.95
    assert history.last.train_loss < history.records[0].train_loss


def test_resume_matches_unbroken_run(tmp_path):
    """Test an interrupted and resumed run equals an unbroken one."""
    manifest = write_tile_dataset(tmp_path, {Split.TRAIN: 8, Split.VAL: 4})
    settings = {"epochs": 4, "checkpoint_every": 2}
    full_model, full, events = _train(tmp_path, tmp_path / "full", manifest, **settings)
    # the event stream of an unbroken run
    started = [x.data for x in events if x.type == EventType.EPOCH_STARTED]
    assert started == [1, 2, 3, 4]
    assert sum(1 for x in events if x.type == EventType.TRAINING_FINISHED) == 1
    assert (tmp_path / "full" / "summary.json").is_file()
    summary = json.loads((tmp_path / "full" / "summary.json").read_text())
    assert summary["epochs"] == 4
    assert summary["test_acc"] is None

    out_dir = tmp_path / "broken"
    _, partial, _ = _train(tmp_path, out_dir, manifest, stop_after=3, **settings)
    assert len(partial) == 3
    assert not (out_dir / "summary.json").exists()
    assert (out_dir / "checkpoints" / "last.ckpt").is_file()
    assert (out_dir / "checkpoints" / "best.ckpt").is_file()
    model, resumed, events = _train(tmp_path, out_dir, manifest, resume=True, **settings)
    assert [x.data for x in events if x.type == EventType.EPOCH_STARTED] == [4]
    assert len(resumed) == 4
    assert _without_seconds(resumed) == _without_seconds(full)
    assert (out_dir / "summary.json").is_file()
    for name, param in full_model.params.items():
        assert np.array_equal(param.data, model.params[name].data)
    assert len(read_history(out_dir / "metrics.csv")) == 4


def test_divergence_is_reported(tmp_path):
    """Test a non-finite loss stops training with its epoch and batch."""
    manifest = write_tile_dataset(tmp_path, {Split.TRAIN: 8})
    with EdgeSqueeze(make_config(train={"batch_size": 4, "epochs": 2})) as toolkit:
        model = toolkit.runtime.compile(toolkit.arch.build())
        name = sorted(model.params)[0]
        model.params[name].data[...] = np.nan
        with raises(TrainingDivergedError) as err:
            toolkit.trainer.train(model, manifest, tmp_path, tmp_path / "run")
    assert err.value.epoch == 1
    assert err.value.batch == 0


def test_evaluate(tmp_path):
    """Test evaluation is deterministic and rejects empty splits."""
    manifest = write_tile_dataset(tmp_path, {Split.TRAIN: 4, Split.TEST: 6})
    with EdgeSqueeze(make_config(train={"batch_size": 4})) as toolkit:
        model = toolkit.runtime.compile(toolkit.arch.build())
        first = toolkit.trainer.evaluate(model, manifest, tmp_path)
        second = toolkit.trainer.evaluate(model, manifest, tmp_path, "test")
        assert first == second
        assert first.count == 6
        assert 0.0 <= first.accuracy <= 1.0
        with raises(EmptySplitError):
            toolkit.trainer.evaluate(model, manifest, tmp_path, Split.VAL)
        with raises(EmptySplitError):
            toolkit.trainer.train(
                model, write_tile_dataset(tmp_path, {Split.VAL: 2}), tmp_path, tmp_path / "run"
            )


def test_history_csv(tmp_path):
    """Test the metrics CSV and its error cases."""
    history = TrainHistory()
    with raises(EdgeSqueezeError):
        emit_history(history, tmp_path / "metrics.csv")
    history.append(EpochRecord(1, 0.693, 0.5, None, None, 1.25))
    history.append(EpochRecord(2, 0.1 + 0.2, 0.875, 0.4, 0.75, 1.5))
    with raises(ValueError):
        history.append(EpochRecord(4, 0.1, 1.0))
    path = emit_history(history, tmp_path / "metrics.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,train_loss,train_acc,val_loss,val_acc,seconds"
    assert len(lines) == 3
    assert read_history(path) == history
    assert history.avg_seconds == 1.375
    assert len(history.truncated(1)) == 1
    assert not len(read_history(tmp_path / "missing.csv"))
    with raises(EdgeSqueezeError):
        TrainHistory.from_csv("epoch,loss\n1,0.5\n")
    with raises(EdgeSqueezeError):
        TrainHistory.from_csv(
            "epoch,train_loss,train_acc,val_loss,val_acc,seconds\none,0.5,0.5,,,1\n"
        )
