"""Minimal dense tensors with reverse-mode differentiation on a recording tape.

The design is deliberately small: a ``Tensor`` wraps a numpy array, and every
differentiable op (see :mod:`steprobe.ops`) records one entry on the active
``Tape`` while executing forward. Because entries are appended in execution
order, the tape is already topologically sorted; replaying it once in reverse
is backpropagation. There is no general graph, no views, no in-place autograd.

Gradient semantics:

* ``grad`` accumulates. Calling ``backward`` twice without ``zero_grad``
  doubles leaf gradients exactly — intermediate (tape-produced) grads are
  re-zeroed at the start of every replay so stale values never compound.
* Only tensors with ``requires_grad=True`` receive gradients. Ops propagate
  the flag, so feature inputs (``requires_grad=False``) cost nothing extra.
* Training runs in float32; float64 is available for verification (gradient
  checks run the same code at 64-bit).

One tape is never shared across threads; the active-tape stack is
thread-local. Running ops with no tape active executes pure numpy forward —
that is the evaluation fast path.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError

_FLOAT_DTYPES = (np.float32, np.float64)

_tls = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = []
        _tls.stack = stack
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A numpy-backed value with an optional gradient accumulator."""

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = np.zeros_like(arr) if requires_grad else None
        # set by Tape.record for non-leaf tensors
        self._tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def is_leaf(self) -> bool:
        return self._tape is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def accumulate_grad(self, g: np.ndarray) -> None:
        """Add ``g`` into ``grad`` (allocating it on first touch)."""
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


class TapeEntry:
    """One recorded op: its output, its inputs, and how to push grads back."""

    __slots__ = ("output", "inputs", "backward_fn")

    def __init__(self, output: Tensor, inputs: tuple[Tensor, ...],
                 backward_fn: Callable[[np.ndarray], None]):
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of ops; reverse replay visits each node exactly once."""

    def __init__(self):
        self.entries: list[TapeEntry] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise ContractError("tape stack corrupted: exiting a tape that is not active")
        stack.pop()

    def record(self, output: Tensor, inputs: Sequence[Tensor],
               backward_fn: Callable[[np.ndarray], None]) -> None:
        output.requires_grad = True
        if output.grad is None:
            output.grad = np.zeros_like(output.data)
        output._tape = self
        self.entries.append(TapeEntry(output, tuple(inputs), backward_fn))

    def release(self) -> None:
        """Drop the recorded graph so its buffers free by refcount alone.

        Entries form reference cycles (tape -> entry -> output tensor ->
        tape), so without this the arrays of every batch wait for the cycle
        collector, which triggers on object counts and falls far behind
        gigabytes of numpy buffers. Tight training loops call this once the
        optimizer step is done. Leaf gradients already accumulated are
        untouched; calling ``backward`` through a released tape raises.
        """
        for entry in self.entries:
            entry.output._tape = None
        self.entries.clear()

    def backward(self, loss: Tensor) -> None:
        """Seed ``loss`` with 1 and replay the tape once, in reverse."""
        if loss._tape is not self:
            raise ContractError("loss is not on this tape")
        if loss.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
        # Intermediates are re-zeroed so a second backward cannot compound
        # through stale values; leaves keep accumulating.
        for entry in self.entries:
            entry.output.zero_grad()
        loss.grad += np.ones_like(loss.data)
        for entry in reversed(self.entries):
            entry.backward_fn(entry.output.grad)


def backward(loss: Tensor) -> None:
    """Backpropagate from a scalar loss recorded on a tape."""
    if loss._tape is None:
        raise ContractError("loss was not produced under an active Tape")
    loss._tape.backward(loss)


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.zero_grad()
