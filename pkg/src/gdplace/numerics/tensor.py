"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations record themselves on the innermost active :class:`Tape` whenever
at least one input is tracked.  Outside any tape, operations are plain numpy
calls and nothing is retained, which is what large no-grad forwards rely on.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from gdplace.errors import ContractError

_state = threading.local()


def _tape_stack() -> list:
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A row-major array of 64-bit reals.

    ``requires_grad`` marks leaves whose gradient is wanted (parameters);
    intermediate results inherit tracking from their inputs.
    """

    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def values(self) -> list[float]:
        return self.data.ravel().tolist()

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, grad={self.requires_grad})"

    # Operator sugar; implementations live in ops.py.
    def __add__(self, other):
        from gdplace.numerics import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from gdplace.numerics import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from gdplace.numerics import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from gdplace.numerics import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from gdplace.numerics import ops
        return ops.mul(self, -1.0)

    def __truediv__(self, other):
        from gdplace.numerics import ops
        if isinstance(other, Tensor):
            raise ContractError("division is only supported by Python scalars")
        return ops.mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        from gdplace.numerics import ops
        return ops.matmul(self, other)


VJP = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@dataclass
class TapeEntry:
    tag: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    vjp: VJP


@dataclass
class Tape:
    """Ordered record of differentiable operations.

    Entries are appended in execution order, which is a valid topological
    order of the computation, so backward is a single reverse sweep.
    """

    entries: list[TapeEntry] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise ContractError("tape stack corrupted")
        stack.pop()

    def record(self, tag: str, inputs, output: Tensor, vjp: VJP) -> None:
        self.entries.append(TapeEntry(tag, tuple(inputs), output, vjp))

    def produced(self, t: Tensor) -> bool:
        return any(e.output is t for e in self.entries)

    def gradients(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Reverse sweep from a scalar ``loss``; returns grads keyed by ``id``."""
        if loss.data.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for entry in reversed(self.entries):
            g_out = grads.pop(id(entry.output), None)
            if g_out is None:
                continue
            in_grads = entry.vjp(g_out)
            for t, g in zip(entry.inputs, in_grads):
                if g is None or not t.requires_grad:
                    continue
                key = id(t)
                prev = grads.get(key)
                grads[key] = g if prev is None else prev + g
        return grads


def tracked(*inputs) -> Tape | None:
    """Return the tape to record on if any input is tracked, else None."""
    tape = active_tape()
    if tape is None:
        return None
    for t in inputs:
        if isinstance(t, Tensor) and t.requires_grad:
            return tape
    return None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def backward(loss: Tensor, tape: Tape, params) -> dict[str, np.ndarray]:
    """Gradients of ``loss`` for every parameter in ``params``.

    Parameters the loss does not depend on receive zero arrays.
    """
    if loss.data.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    if loss.requires_grad and not tape.produced(loss):
        if not any(loss is p for p in params.values()):
            raise ContractError("loss was not produced on this tape")
    raw = tape.gradients(loss)
    out = {}
    for name, p in params.items():
        g = raw.get(id(p))
        if g is None and p is loss:
            g = np.ones_like(p.data)
        out[name] = np.zeros_like(p.data) if g is None else g
    return out
