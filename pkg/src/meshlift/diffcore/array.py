"""Dense arrays plus a reverse-mode gradient tape.

Scalars are float64 by default; a global switch selects float32 for speed.
Recording happens only inside an active ``Tape`` context, and only for
operations that can reach a ``requires_grad`` leaf.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

_DEFAULT_DTYPE = np.float64


def set_default_dtype(dtype) -> None:
    """Select the global scalar type (np.float32 or np.float64)."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported scalar type: {dtype}")
    _DEFAULT_DTYPE = dtype


def default_dtype():
    return _DEFAULT_DTYPE


class Array:
    """A dense n-d array of real scalars, optionally tracked for gradients.

    ``grad`` persists only on leaves (arrays the caller created with
    requires_grad=True); intermediate results produced by ops use buffers
    scoped to a single backward pass, so repeated backward calls double
    leaf gradients instead of compounding through the graph.
    """

    __slots__ = ("data", "grad", "requires_grad", "_produced", "_pass_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=_DEFAULT_DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._produced = False
        self._pass_grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ValueError(f"gradient shape {g.shape} != data shape {self.data.shape}")
        if self._produced and _PASS_STACK:
            if self._pass_grad is None:
                self._pass_grad = np.zeros_like(self.data)
                _PASS_STACK[-1].append(self)
            self._pass_grad += g
        else:
            if self.grad is None:
                self.grad = np.zeros_like(self.data)
            self.grad += g

    def __repr__(self):
        return f"Array(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the real work lives in ops.py (imported lazily to
    # avoid a cycle).
    def _ops(self):
        from . import ops
        return ops

    def __add__(self, other):
        return self._ops().add(self, other)

    def __radd__(self, other):
        return self._ops().add(self, other)

    def __sub__(self, other):
        return self._ops().sub(self, other)

    def __rsub__(self, other):
        return self._ops().sub(as_array(other), self)

    def __mul__(self, other):
        return self._ops().mul(self, other)

    def __rmul__(self, other):
        return self._ops().mul(self, other)

    def __truediv__(self, other):
        return self._ops().div(self, other)

    def __rtruediv__(self, other):
        return self._ops().div(as_array(other), self)

    def __neg__(self):
        return self._ops().neg(self)

    def __getitem__(self, idx):
        return self._ops().getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return self._ops().reshape(self, shape)


def as_array(x) -> Array:
    """Wrap raw data as a constant Array; pass Arrays through."""
    if isinstance(x, Array):
        return x
    return Array(np.asarray(x, dtype=_DEFAULT_DTYPE))


class _Node:
    """One recorded operation: output refs plus an adjoint callback."""

    __slots__ = ("outputs", "backward")

    def __init__(self, outputs: Sequence[Array], backward: Callable):
        self.outputs = tuple(outputs)
        self.backward = backward


class Tape:
    """Ordered record of executed operations, replayed in reverse by backward().

    Usable as a context manager; ops executed inside record themselves when
    any input requires gradients.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _push_tape(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _pop_tape(self)
        return False

    def __len__(self) -> int:
        return len(self.nodes)


_TAPE_STACK: list[Tape] = []


def _push_tape(tape: Tape) -> None:
    _TAPE_STACK.append(tape)


def _pop_tape(tape: Tape) -> None:
    if not _TAPE_STACK or _TAPE_STACK[-1] is not tape:
        raise RuntimeError("tape context exited out of order")
    _TAPE_STACK.pop()


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


_PASS_STACK: list[list[Array]] = []


def record(inputs: Sequence[Array], outputs: Sequence[Array], backward: Callable) -> None:
    """Register an op on the active tape if it can reach a gradient leaf.

    ``backward`` receives one gradient array per output (zeros where the
    output never influenced the loss) and must accumulate into the inputs.
    """
    tape = active_tape()
    if tape is None:
        return
    if not any(inp.requires_grad for inp in inputs):
        return
    for out in outputs:
        out.requires_grad = True
        out._produced = True
    tape.nodes.append(_Node(outputs, backward))


def backward(tape: Tape, loss: Array) -> None:
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf on the tape.

    Gradients add onto whatever is already in ``.grad``; running twice
    without zeroing doubles them.
    """
    if loss.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    touched: list[Array] = []
    _PASS_STACK.append(touched)
    try:
        loss.accumulate_grad(np.ones_like(loss.data))
        for node in reversed(tape.nodes):
            grads = []
            any_grad = False
            for out in node.outputs:
                if out._pass_grad is None:
                    grads.append(None)
                else:
                    grads.append(out._pass_grad)
                    any_grad = True
            if not any_grad:
                continue
            grads = [g if g is not None else np.zeros_like(out.data)
                     for g, out in zip(grads, node.outputs)]
            node.backward(*grads)
    finally:
        _PASS_STACK.pop()
        for arr in touched:
            arr._pass_grad = None
