"""Tests for graph compilation and checkpoints."""

import dataclasses

import numpy as np
from pytest import raises

from edge_squeeze.controllers.architecture.pipeline import build_toy
from edge_squeeze.controllers.architecture.serialization import graph_to_text
from edge_squeeze.controllers.runtime import model_from_checkpoint
from edge_squeeze.controllers.runtime.checkpoint import decode_checkpoint, encode_checkpoint
from edge_squeeze.controllers.runtime.compiler import compile_graph
from edge_squeeze.models.architecture import LayerSpec
from edge_squeeze.models.enums import Mode
from edge_squeeze.models.errors import (
    CompileError,
    CorruptCheckpointError,
    GraphHashMismatchError,
    ShapeError,
)
from edge_squeeze.tensor import Adam, Tensor, binary_cross_entropy


def _batch(seed=0, count=4, size=32):
    return np.random.default_rng(seed).random((count, 3, size, size), dtype=np.float32)


def test_compile_deterministic():
    """Test the same seed gives identical parameters and outputs."""
    graph = build_toy(8, 32)
    first, second = compile_graph(graph, 7), compile_graph(graph, 7)
    assert first.params.keys() == second.params.keys()
    assert all(np.array_equal(first.params[x].data, second.params[x].data) for x in first.params)
    assert np.array_equal(first.predict(_batch()), second.predict(_batch()))
    other = compile_graph(graph, 8)
    assert not np.array_equal(first.predict(_batch()), other.predict(_batch()))
    assert first.num_parameters == sum(x.size for x in first.params.values())


def test_forward_shapes():
    """Test model outputs and input checks."""
    model = compile_graph(build_toy(8, 32), 0)
    probs = model.predict(_batch(count=5), batch_size=2)
    assert probs.shape == (5,)
    assert np.all((probs > 0) & (probs < 1))
    out = model.forward(Tensor(_batch()), Mode.TRAIN)
    assert out.shape == (4, 1)
    with raises(ShapeError):
        model.predict(_batch(size=40))


def test_compile_rejects_invalid():
    """Test compile errors for invalid graphs."""
    graph = build_toy(8, 32)
    broken = dataclasses.replace(graph, head=graph.head[:-1])
    with raises(CompileError):
        compile_graph(broken, 0)
    bogus = LayerSpec("bogus", "warp")
    module = graph.modules[0]
    broken = dataclasses.replace(
        graph,
        modules=(dataclasses.replace(module, layers=module.layers + (bogus,)),)
        + graph.modules[1:],
    )
    with raises(CompileError):
        compile_graph(broken, 0)


def test_checkpoint_round_trip(toolkit, tmp_path):
    """Test save and load restore outputs, optimizer state and rng."""
    graph = toolkit.arch.build()
    model = toolkit.runtime.compile(graph)
    optimizer = Adam(model.params)
    batch = Tensor(_batch())
    loss = binary_cross_entropy(model.forward(batch), np.ones((4, 1)))
    loss.backward()
    optimizer.step()
    path = tmp_path / "model.ckpt"
    toolkit.runtime.save_checkpoint(model, path, optimizer, epoch=3, extra={"best": 0.5})
    loaded, state = toolkit.runtime.load_checkpoint(path, graph)
    assert state.epoch == 3
    assert state.extra == {"best": 0.5}
    assert state.optimizer["step"] == 1
    assert np.array_equal(model.predict(batch.data), loaded.predict(batch.data))
    for name, buffer in model.buffers.items():
        assert np.array_equal(buffer, loaded.buffers[name])
    # the dropout stream continues where it was saved
    assert model.rng.random() == loaded.rng.random()
    restored = toolkit.runtime.load_weights(toolkit.runtime.compile(graph, seed=99), path)
    assert np.array_equal(restored.predict(batch.data), model.predict(batch.data))


def test_checkpoint_corruption(toolkit, tmp_path):
    """Test every damaged checkpoint is rejected."""
    graph = toolkit.arch.build()
    model = toolkit.runtime.compile(graph)
    path = tmp_path / "model.ckpt"
    toolkit.runtime.save_checkpoint(model, path)
    data = path.read_bytes()
    # a single flipped byte
    flipped = bytearray(data)
    flipped[len(data) // 2] ^= 0xFF
    (tmp_path / "flipped.ckpt").write_bytes(bytes(flipped))
    with raises(CorruptCheckpointError):
        toolkit.runtime.load_checkpoint(tmp_path / "flipped.ckpt")
    # truncation
    (tmp_path / "short.ckpt").write_bytes(data[:-100])
    with raises(CorruptCheckpointError):
        toolkit.runtime.load_checkpoint(tmp_path / "short.ckpt")
    with raises(CorruptCheckpointError):
        toolkit.runtime.load_checkpoint(tmp_path / "missing.ckpt")
    with raises(CorruptCheckpointError):
        decode_checkpoint(b"nope")
    # a wrong graph
    with raises(GraphHashMismatchError):
        toolkit.runtime.load_checkpoint(path, build_toy(4, 32))


def test_checkpoint_blob_mismatch():
    """Test a checkpoint missing tensors of its graph is rejected."""
    graph = build_toy(8, 32)
    model = compile_graph(graph, 0)
    header = {
        "graph_hash": model.graph_hash,
        "graph": graph_to_text(graph),
        "epoch": 0,
        "rng": {"dropout": model.rng.bit_generator.state},
    }
    data = encode_checkpoint(header, {"param": {}, "buffer": model.buffers})
    with raises(CorruptCheckpointError):
        model_from_checkpoint(decode_checkpoint(data))
