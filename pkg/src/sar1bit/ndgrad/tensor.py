"""Dense float tensors with reverse-mode automatic differentiation.

Values are numpy arrays (float32 by default, float64 available for
high-precision gradient checking). Differentiable operations record
themselves on a tape in execution order; calling :func:`backward` on a
scalar walks the tape in reverse and accumulates gradients into the
``grad`` buffer of every tensor that requires them.

The tape is rebuilt on every forward pass (define-by-run). A tape can be
consumed by exactly one backward pass; running another forward after
backward starts a fresh tape automatically.
"""

from __future__ import annotations

import contextlib

import numpy as np

FLOAT_DTYPES = (np.float32, np.float64)


class NdgradError(Exception):
    """Base class for autodiff errors."""


class ShapeError(NdgradError):
    """Operands do not conform to a primitive's shape signature."""


class NumericError(NdgradError):
    """A primitive produced a NaN/Inf output from finite inputs."""


class TapeError(NdgradError):
    """Tape misuse: dead tape, non-scalar loss, missing gradients."""


class _Record:
    """One primitive application: output, inputs, and its backward rule."""

    __slots__ = ("op", "output", "inputs", "backward")

    def __init__(self, op, output, inputs, backward):
        self.op = op
        self.output = output
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered log of primitive applications for one forward pass.

    Records are appended in execution order, so topological order holds by
    construction. ``backward`` may run once; afterwards the tape is dead.
    """

    def __init__(self):
        self._records: list[_Record] = []
        self._consumed = False

    def __len__(self):
        return len(self._records)

    @property
    def consumed(self) -> bool:
        return self._consumed

    def record(self, op, output, inputs, backward_fn):
        if self._consumed:
            raise TapeError("cannot record on a consumed tape")
        self._records.append(_Record(op, output, inputs, backward_fn))

    def run_backward(self, loss: "Tensor"):
        if self._consumed:
            raise TapeError("backward already ran on this tape; re-record the forward pass")
        self._consumed = True
        loss.grad = np.ones_like(loss.data)
        for rec in reversed(self._records):
            gout = rec.output.grad
            if gout is None:
                continue  # not on a path from the loss
            gins = rec.backward(gout)
            for tin, gin in zip(rec.inputs, gins):
                if gin is None or not tin.requires_grad:
                    continue
                if gin.shape != tin.data.shape:
                    raise ShapeError(
                        f"{rec.op}: backward produced gradient of shape {gin.shape} "
                        f"for input of shape {tin.data.shape}"
                    )
                if tin.grad is None:
                    tin.grad = gin.astype(tin.data.dtype, copy=True)
                else:
                    tin.grad = tin.grad + gin
        self._records.clear()


_CURRENT_TAPE: Tape | None = None
_GRAD_ENABLED = True


def active_tape() -> Tape:
    """Tape currently recording; a fresh one is created on demand."""
    global _CURRENT_TAPE
    if _CURRENT_TAPE is None or _CURRENT_TAPE.consumed:
        _CURRENT_TAPE = Tape()
    return _CURRENT_TAPE


def grad_enabled() -> bool:
    return _GRAD_ENABLED


@contextlib.contextmanager
def no_grad():
    """Suppress tape recording inside the block (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """N-dimensional real array with an optional gradient slot.

    ``data`` is row-major float32 (or float64 in gradient-check mode).
    ``grad`` is populated by backward passes and holds an array of the
    same shape. ``node`` points at the tape that recorded the tensor's
    producing primitive (None for leaves and constants).
    """

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else np.float32)
        if arr.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node: Tape | None = None

    # -- basic interrogation ------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Copy of the value with no gradient tracking."""
        return Tensor(self.data.copy(), requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}{flag})"

    # operator sugar; real implementations live in ops.py and are patched in
    # at import time to avoid a circular import.


def backward(loss: Tensor):
    """Populate ``grad`` on every requires-grad tensor reachable from ``loss``.

    ``loss`` must be a scalar. A loss with no recorded history (a constant)
    is a no-op: there is nothing to differentiate.
    """
    global _CURRENT_TAPE
    if loss.data.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss.node
    if tape is None:
        return
    tape.run_backward(loss)
    if _CURRENT_TAPE is tape:
        _CURRENT_TAPE = None
