"""TrainerController: the training loop, evaluation, metrics and checkpoint cadence."""
from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Optional, Union

import numpy as np

from edge_squeeze.constants import (
    BEST_CHECKPOINT,
    CHECKPOINT_DIR,
    LAST_CHECKPOINT,
    METRICS_FILE,
    SUMMARY_FILE,
)
from edge_squeeze.controllers.datasets.loader import load_batches, split_tiles
from edge_squeeze.helpers.json import json_serializer
from edge_squeeze.models.dataset import DatasetManifest
from edge_squeeze.models.enums import EventType, Mode, Split
from edge_squeeze.models.errors import EmptySplitError, NumericalError, TrainingDivergedError
from edge_squeeze.models.event import ToolkitEvent
from edge_squeeze.models.history import EpochRecord, TrainHistory, emit_history, read_history
from edge_squeeze.models.model import Model
from edge_squeeze.tensor import ops
from edge_squeeze.tensor.optim import Adam
from edge_squeeze.tensor.tensor import current_tape, no_grad

if TYPE_CHECKING:
    from edge_squeeze.toolkit import EdgeSqueeze

DECISION_THRESHOLD = 0.5


@dataclass(frozen=True)
class EvalResult:
    """Loss and accuracy of a model over one split."""

    split: Split
    loss: float
    accuracy: float
    count: int


def batch_correct(prob: np.ndarray, labels: np.ndarray) -> int:
    """Return the number of thresholded predictions that match their labels."""
    return int(((prob >= DECISION_THRESHOLD) == (labels >= DECISION_THRESHOLD)).sum())


def restore_state(model: Model, loaded: Model) -> None:
    """Copy parameters, buffers and the dropout rng state of loaded into model."""
    for name, tensor in loaded.params.items():
        model.params[name].data[...] = tensor.data
    for name, buffer in loaded.buffers.items():
        model.buffers[name][...] = buffer
    model.rng.bit_generator.state = loaded.rng.bit_generator.state


class TrainerController:
    """Trains compiled models on the tile dataset."""

    def __init__(self, toolkit: EdgeSqueeze):
        """Initialize class."""
        self.toolkit = toolkit
        self.logger = toolkit.logger.getChild("trainer")

    @property
    def config(self):
        """Return the train config."""
        return self.toolkit.config.train

    def evaluate(
        self,
        model: Model,
        manifest: DatasetManifest,
        dataset_dir: Union[str, Path],
        split: Union[Split, str] = Split.TEST,
    ) -> EvalResult:
        """Return eval-mode loss and accuracy (0.5 threshold) over a split."""
        split = Split(split)
        count = len(split_tiles(manifest, split))
        total_loss = 0.0
        correct = 0
        with no_grad():
            for images, labels in load_batches(
                manifest,
                split,
                self.config.batch_size,
                None,
                root=dataset_dir,
                size=model.input_size,
                prefetch=self.config.prefetch,
            ):
                prob = model.forward(images, Mode.EVAL)
                total_loss += ops.binary_cross_entropy(prob, labels).item() * len(labels.data)
                correct += batch_correct(prob.data, labels.data)
        return EvalResult(split, total_loss / count, correct / count, count)

    def _train_epoch(
        self,
        model: Model,
        optimizer: Adam,
        manifest: DatasetManifest,
        dataset_dir: Union[str, Path],
        epoch: int,
    ):
        """Run one epoch of optimizer steps, return (loss, accuracy) over its batches."""
        model.train()
        total_loss = 0.0
        correct = 0
        count = 0
        batches = load_batches(
            manifest,
            Split.TRAIN,
            self.config.batch_size,
            self.config.shuffle_seed,
            root=dataset_dir,
            epoch=epoch,
            size=model.input_size,
            prefetch=self.config.prefetch,
        )
        for batch_idx, (images, labels) in enumerate(batches):
            optimizer.zero_grad()
            try:
                prob = model(images)
                loss = ops.binary_cross_entropy(prob, labels)
            except NumericalError as err:
                current_tape().clear()
                raise TrainingDivergedError(epoch + 1, batch_idx, str(err)) from err
            value = loss.item()
            if not np.isfinite(value):
                current_tape().clear()
                raise TrainingDivergedError(epoch + 1, batch_idx, f"loss is {value}")
            loss.backward()
            optimizer.step()
            size = len(labels.data)
            total_loss += value * size
            correct += batch_correct(prob.data, labels.data)
            count += size
            self.logger.debug(
                "Epoch %s batch %s: loss %.4f", epoch + 1, batch_idx + 1, value
            )
        return total_loss / count, correct / count

    def _save(
        self,
        model: Model,
        optimizer: Adam,
        path: Path,
        epoch: int,
        best: Optional[float],
    ) -> None:
        self.toolkit.runtime.save_checkpoint(
            model, path, optimizer, epoch, {"best": best, "run": self.toolkit.config.name}
        )
        self.toolkit.signal_event(ToolkitEvent(EventType.CHECKPOINT_SAVED, str(path), epoch))

    def train(
        self,
        model: Model,
        manifest: DatasetManifest,
        dataset_dir: Union[str, Path],
        out_dir: Union[str, Path],
        resume: bool = False,
        stop_after: Optional[int] = None,
    ) -> TrainHistory:
        """
        Train a model and write metrics.csv, checkpoints and summary.json into out_dir.

            :param resume: continue from checkpoints/last.ckpt when it exists.
            :param stop_after: stop (with a checkpoint) once this many epochs completed.
        """
        config = self.config
        out_dir = Path(out_dir)
        ckpt_dir = out_dir / CHECKPOINT_DIR
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        split_tiles(manifest, Split.TRAIN)
        has_val = bool(manifest.tiles_in(Split.VAL))
        optimizer = Adam(model.params, config.learning_rate, config.beta1, config.beta2)
        history = TrainHistory()
        best: Optional[float] = None
        start = 0

        if resume and (ckpt_dir / LAST_CHECKPOINT).is_file():
            loaded, state = self.toolkit.runtime.load_checkpoint(
                ckpt_dir / LAST_CHECKPOINT, model.graph
            )
            restore_state(model, loaded)
            if state.optimizer:
                optimizer.load_state_dict(state.optimizer)
            start = state.epoch
            best = state.extra.get("best")
            history = read_history(out_dir / METRICS_FILE).truncated(start)
            self.logger.info("Resuming %s after epoch %s", model.graph.name, start)

        run_name = self.toolkit.config.name
        last_epoch = config.epochs if stop_after is None else min(config.epochs, stop_after)
        for epoch in range(start, last_epoch):
            self.toolkit.signal_event(ToolkitEvent(EventType.EPOCH_STARTED, run_name, epoch + 1))
            started = time.perf_counter()
            train_loss, train_acc = self._train_epoch(
                model, optimizer, manifest, dataset_dir, epoch
            )
            val = self.evaluate(model, manifest, dataset_dir, Split.VAL) if has_val else None
            record = EpochRecord(
                epoch=epoch + 1,
                train_loss=train_loss,
                train_acc=train_acc,
                val_loss=val.loss if val else None,
                val_acc=val.accuracy if val else None,
                seconds=round(time.perf_counter() - started, 3),
            )
            history.append(record)
            emit_history(history, out_dir / METRICS_FILE)
            self.logger.info(
                "Epoch %s/%s: loss %.4f acc %.4f%s in %.2f s",
                record.epoch,
                config.epochs,
                train_loss,
                train_acc,
                f", val loss {val.loss:.4f} val acc {val.accuracy:.4f}" if val else "",
                record.seconds,
            )
            score = record.val_acc if val else record.train_acc
            if best is None or score > best:
                best = score
                self._save(model, optimizer, ckpt_dir / BEST_CHECKPOINT, record.epoch, best)
            if record.epoch % config.checkpoint_every == 0 or record.epoch == last_epoch:
                self._save(model, optimizer, ckpt_dir / LAST_CHECKPOINT, record.epoch, best)
            self.toolkit.signal_event(ToolkitEvent(EventType.EPOCH_FINISHED, run_name, record))

        if len(history) == config.epochs:
            self.write_summary(model, manifest, dataset_dir, out_dir, history)
        self.toolkit.signal_event(ToolkitEvent(EventType.TRAINING_FINISHED, run_name, history))
        return history

    def write_summary(
        self,
        model: Model,
        manifest: DatasetManifest,
        dataset_dir: Union[str, Path],
        out_dir: Union[str, Path],
        history: TrainHistory,
    ) -> dict:
        """Evaluate the test split (when present) and write summary.json."""
        try:
            test = self.evaluate(model, manifest, dataset_dir, Split.TEST)
        except EmptySplitError:
            test = None
        last = history.last
        summary = {
            "name": self.toolkit.config.name,
            "graph": model.graph.name,
            "graph_hash": model.graph_hash,
            "params": model.num_parameters,
            "epochs": len(history),
            "train_acc": last.train_acc if last else None,
            "val_acc": last.val_acc if last else None,
            "test_acc": test.accuracy if test else None,
            "test_loss": test.loss if test else None,
            "avg_epoch_seconds": history.avg_seconds,
        }
        Path(out_dir, SUMMARY_FILE).write_text(json_serializer(summary) + "\n", encoding="utf-8")
        if test:
            self.logger.info(
                "Test loss %.4f accuracy %.4f over %s tiles", test.loss, test.accuracy, test.count
            )
        return summary
