"""Dense float64 tensors with an explicit reverse-mode gradient tape.

Design: define-by-run. Every primitive op computes its result eagerly with
numpy and, while a :class:`Tape` is active (``with Tape() as tape:``),
records ``(inputs, output, backward_fn)`` onto it whenever the op touches a
leaf parameter or a tensor already produced on that tape. :func:`backward`
replays the records once, in reverse, accumulating cotangents into a
gradient map.

Tensors are immutable values after creation; ops never write into an
existing ``data`` buffer, so independent forward passes are thread-safe.
The active tape is thread-local and a single tape is single-threaded.
"""

from __future__ import annotations

import threading

import numpy as np

_STATE = threading.local()

# When enabled, every tensor construction verifies finiteness. Off by default
# (full-array scans on every op are measurable at training time); tests and
# the trainer's per-step loss check use it.
_CHECK_FINITE = False


def set_finite_checks(enabled: bool) -> bool:
    """Toggle NaN/Inf validation on tensor construction; returns prior value."""
    global _CHECK_FINITE
    prior = _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)
    return prior


def active_tape() -> "Tape | None":
    return getattr(_STATE, "tape", None)


class Tape:
    """Ordered record of primitive ops for one forward computation."""

    __slots__ = ("_entries",)

    def __init__(self):
        self._entries: list[tuple[tuple, "Tensor", object]] = []

    def __enter__(self) -> "Tape":
        if active_tape() is not None:
            raise RuntimeError("a tape is already active on this thread")
        _STATE.tape = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _STATE.tape = None

    def record(self, inputs: tuple, output: "Tensor", backward_fn) -> None:
        self._entries.append((inputs, output, backward_fn))

    def __len__(self) -> int:
        return len(self._entries)


class Tensor:
    """Immutable dense float64 array.

    ``leaf=True`` marks a trainable parameter: ops involving it are recorded
    on the active tape and :func:`backward` reports its gradient.
    """

    __slots__ = ("data", "tape", "leaf")

    def __init__(self, data, leaf: bool = False, _tape: Tape | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if _CHECK_FINITE and not np.all(np.isfinite(arr)):
            raise FloatingPointError("non-finite values in tensor")
        self.data = arr
        self.tape = _tape
        self.leaf = leaf

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        kind = "leaf" if self.leaf else ("taped" if self.tape is not None else "const")
        return f"Tensor(shape={self.shape}, {kind})"

    # Arithmetic sugar; implementations live in cadence.ops.
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops

        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops

        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops

        return ops.div(other, self)

    def __neg__(self):
        from . import ops

        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


class Gradients:
    """Gradient map returned by :func:`backward`, keyed by tensor identity."""

    def __init__(self, table: dict[int, np.ndarray]):
        self._table = table

    def get(self, t: Tensor) -> np.ndarray:
        """Gradient of the loss w.r.t. ``t``; zeros if the loss ignores it."""
        g = self._table.get(id(t))
        if g is None:
            return np.zeros_like(t.data)
        return g

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._table


def backward(tape: Tape, loss: Tensor) -> Gradients:
    """Reverse-replay ``tape`` from a scalar ``loss``.

    Visits each recorded op exactly once, in reverse order; ops outside the
    loss's ancestry receive no cotangent and contribute nothing.
    """
    if loss.data.shape != ():
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    if loss.tape is not tape:
        raise ValueError("loss was not recorded on this tape")
    table: dict[int, np.ndarray] = {id(loss): np.ones(())}
    for inputs, output, backward_fn in reversed(tape._entries):
        g = table.get(id(output))
        if g is None:
            continue
        partials = backward_fn(g)
        for inp, p in zip(inputs, partials):
            if p is None or not isinstance(inp, Tensor):
                continue
            if not (inp.leaf or inp.tape is tape):
                continue  # constant w.r.t. this tape
            prev = table.get(id(inp))
            table[id(inp)] = p if prev is None else prev + p
    return Gradients(table)
