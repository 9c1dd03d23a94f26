"""Dense tensor with reverse-mode automatic differentiation."""
from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from edge_squeeze.models.errors import NumericalError, ShapeError, TapeError

GradFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_STATE = threading.local()


def get_dtype() -> np.dtype:
    """Return the working dtype of the current thread (float32 unless overridden)."""
    return getattr(_STATE, "dtype", np.dtype(np.float32))


@contextmanager
def precision(dtype) -> Iterator[None]:
    """Switch the working dtype, 64-bit mode is meant for gradient checks."""
    previous = get_dtype()
    _STATE.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _STATE.dtype = previous


def is_grad_enabled() -> bool:
    """Return if ops currently record on the tape."""
    return getattr(_STATE, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording (inference)."""
    previous = is_grad_enabled()
    _STATE.grad_enabled = False
    try:
        yield
    finally:
        _STATE.grad_enabled = previous


@dataclass(eq=False)
class TapeEntry:
    """A single executed op with its local gradient rule."""

    op: str
    inputs: Tuple["Tensor", ...]
    output: "Tensor"
    grad_fn: GradFn


@dataclass
class GradTape:
    """Ordered record of executed ops of the current thread."""

    entries: List[TapeEntry] = field(default_factory=list)

    def record(self, entry: TapeEntry) -> None:
        """Append an executed op."""
        self.entries.append(entry)

    def clear(self) -> None:
        """Drop all entries and detach their outputs."""
        for entry in self.entries:
            entry.output._entry = None  # pylint: disable=protected-access
        self.entries.clear()

    def __len__(self) -> int:
        """Return number of recorded ops."""
        return len(self.entries)


def current_tape() -> GradTape:
    """Return the tape of the current thread."""
    tape = getattr(_STATE, "tape", None)
    if tape is None:
        tape = _STATE.tape = GradTape()
    return tape


class Tensor:
    """Dense N-dimensional array that can participate in the gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_entry")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype=None,
    ) -> None:
        """Initialize."""
        self.data: np.ndarray = np.ascontiguousarray(data, dtype=dtype or get_dtype())
        if any(dim <= 0 for dim in self.data.shape):
            raise ShapeError(f"Tensor dimensions must be positive, got {self.data.shape}")
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._entry: Optional[TapeEntry] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        """Return shape."""
        return self.data.shape

    @property
    def ndim(self) -> int:
        """Return number of dimensions."""
        return self.data.ndim

    @property
    def size(self) -> int:
        """Return number of elements."""
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        """Return element type."""
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        """Return if the tensor was not produced by a recorded op."""
        return self._entry is None

    def numpy(self) -> np.ndarray:
        """Return the underlying array."""
        return self.data

    def item(self) -> float:
        """Return the value of a single element tensor."""
        if self.size != 1:
            raise ShapeError(f"item() needs a single element tensor, got {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Return a tensor sharing data but not on the tape."""
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        """Clear accumulated gradient."""
        self.grad = None

    def backward(self) -> None:
        """Populate grads of all tensors this (scalar) tensor depends on."""
        backward(self)

    def __add__(self, other: "Tensor") -> "Tensor":
        """Return elementwise sum."""
        from edge_squeeze.tensor import ops  # pylint: disable=import-outside-toplevel

        return ops.add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        """Return elementwise product."""
        from edge_squeeze.tensor import ops  # pylint: disable=import-outside-toplevel

        return ops.mul(self, other)

    def __repr__(self) -> str:
        """Return representation."""
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"


def record(
    op: str, out_data: np.ndarray, inputs: Sequence[Tensor], grad_fn: GradFn
) -> Tensor:
    """Wrap an op result, check it and record it on the tape when needed."""
    if not np.all(np.isfinite(out_data)):
        raise NumericalError(f"Operator {op} produced non-finite values")
    out = Tensor(out_data, dtype=out_data.dtype)
    if is_grad_enabled() and any(x.requires_grad for x in inputs):
        out.requires_grad = True
        entry = TapeEntry(op, tuple(inputs), out, grad_fn)
        out._entry = entry  # pylint: disable=protected-access
        current_tape().record(entry)
    return out


def backward(loss: Tensor) -> None:
    """
    Run reverse-mode differentiation from a scalar loss.

    Leaf tensors with requires_grad accumulate into .grad, the tape is cleared afterwards.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._entry is None:  # pylint: disable=protected-access
        raise TapeError("backward called on a tensor that is not on the gradient tape")

    # reverse topological order over the entries reachable from the loss
    order: List[TapeEntry] = []
    visited = set()
    stack = [(loss._entry, False)]  # pylint: disable=protected-access
    while stack:
        entry, expanded = stack.pop()
        if expanded:
            order.append(entry)
            continue
        if id(entry) in visited:
            continue
        visited.add(id(entry))
        stack.append((entry, True))
        for inp in entry.inputs:
            parent = inp._entry  # pylint: disable=protected-access
            if parent is not None and id(parent) not in visited:
                stack.append((parent, False))

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for entry in reversed(order):
        grad_out = grads.pop(id(entry.output), None)
        if grad_out is None:
            continue
        for inp, grad_in in zip(entry.inputs, entry.grad_fn(grad_out)):
            if grad_in is None or not inp.requires_grad:
                continue
            if inp._entry is None:  # pylint: disable=protected-access
                inp.grad = grad_in.copy() if inp.grad is None else inp.grad + grad_in
            elif id(inp) in grads:
                grads[id(inp)] = grads[id(inp)] + grad_in
            else:
                grads[id(inp)] = grad_in
    current_tape().clear()
