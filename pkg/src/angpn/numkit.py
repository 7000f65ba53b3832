"""Dense float64 matrices and a small reverse-mode tape.

Matrices are plain 2-D ``numpy.float64`` arrays. Every operation here
accepts either arrays or :class:`Var` handles; when any operand is a
``Var`` the operation is recorded on that variable's :class:`Tape` and a
``Var`` is returned, otherwise the raw array is returned. The forward
arithmetic is identical in both cases, so a taped forward pass is bitwise
equal to the untaped one.

Example::

    tape = Tape()
    w = tape.param(np.ones((2, 2)))
    loss = total(relu(w))
    grads = backward(tape, loss)
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractError, NumericError, ShapeError


def as_matrix(a, name="matrix"):
    """Coerce to a finite 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{name} contains non-finite entries")
    return m


class Var:
    """A value recorded on a tape."""

    __slots__ = ("value", "tape", "index", "is_param", "name")

    def __init__(self, value, tape, index, is_param=False, name=None):
        self.value = value
        self.tape = tape
        self.index = index
        self.is_param = is_param
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        kind = "param" if self.is_param else "node"
        return f"Var({kind} #{self.index}, shape={self.value.shape})"


@dataclass
class Record:
    op: str
    inputs: tuple
    output: Var
    forward: Callable[..., np.ndarray]
    vjp: Callable[..., tuple]


@dataclass
class Tape:
    """Ordered log of primitive operations for one forward pass."""

    records: list = field(default_factory=list)
    params: list = field(default_factory=list)
    _count: int = 0

    def _new(self, value, is_param=False, name=None):
        v = Var(value, self, self._count, is_param=is_param, name=name)
        self._count += 1
        return v

    def param(self, value, name=None):
        """Register a leaf whose gradient ``backward`` should return."""
        v = self._new(as_matrix(value, name or "param"), is_param=True, name=name)
        self.params.append(v)
        return v

    def record(self, op, inputs, value, forward, vjp):
        out = self._new(value)
        self.records.append(Record(op, tuple(inputs), out, forward, vjp))
        return out

    def replay(self):
        """Re-run every recorded forward; returns the list of outputs."""
        values = {p.index: p.value for p in self.params}
        outs = []
        for rec in self.records:
            args = [values[a.index] if isinstance(a, Var) else a for a in rec.inputs]
            out = rec.forward(*args)
            values[rec.output.index] = out
            outs.append(out)
        return outs


def _tape_of(args):
    for a in args:
        if isinstance(a, Var):
            return a.tape
    return None


def value(a):
    return a.value if isinstance(a, Var) else a


def apply(op, forward, vjp, *args, check=True):
    """Evaluate ``forward`` on the operand values and record it if taped.

    ``vjp(g, out, *vals)`` returns one cotangent (or ``None``) per operand.
    """
    vals = [value(a) for a in args]
    out = forward(*vals)
    if check and not np.all(np.isfinite(out)):
        raise NumericError(f"{op} produced non-finite entries")
    tape = _tape_of(args)
    if tape is None:
        return out
    return tape.record(op, args, out, forward, vjp)


# ---------------------------------------------------------------------------
# primitives


def _matmul_fwd(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def _matmul_vjp(g, out, a, b):
    return g @ b.T, a.T @ g


def matmul(a, b):
    return apply("matmul", _matmul_fwd, _matmul_vjp, a, b)


def _add_fwd(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} + {b.shape}")
    return a + b


def add(a, b):
    return apply("add", _add_fwd, lambda g, out, a, b: (g, g), a, b)


def scale(a, c):
    c = float(c)
    return apply("scale", lambda x: c * x, lambda g, out, x: (c * g,), a)


def transpose(a):
    return apply("transpose", lambda x: x.T.copy(), lambda g, out, x: (g.T,), a)


def relu(a):
    # derivative at the kink is 0
    return apply(
        "relu",
        lambda x: np.maximum(x, 0.0),
        lambda g, out, x: (g * (x > 0),),
        a,
    )


def _softmax_fwd(x):
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _softmax_vjp(g, z, x):
    return (z * (g - (g * z).sum(axis=1, keepdims=True)),)


def rowwise_softmax(a):
    return apply("rowwise_softmax", _softmax_fwd, _softmax_vjp, a)


def total(a):
    """Sum of all entries as a 1x1 matrix."""
    return apply(
        "total",
        lambda x: np.array([[x.sum()]]),
        lambda g, out, x: (np.full(x.shape, g[0, 0]),),
        a,
    )


# ---------------------------------------------------------------------------
# reverse sweep


def backward(tape, loss):
    """Gradients of the scalar ``loss`` for every parameter of ``tape``.

    Returns a list aligned with ``tape.params``. Parameters the loss does
    not depend on get zero gradients.
    """
    if not isinstance(loss, Var) or loss.tape is not tape:
        raise ContractError("loss must be a Var recorded on this tape")
    if loss.value.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.value.shape}")
    grads = {loss.index: np.ones_like(loss.value)}
    for rec in reversed(tape.records):
        g = grads.pop(rec.output.index, None)
        if g is None:
            continue
        vals = [value(a) for a in rec.inputs]
        cots = rec.vjp(g, rec.output.value, *vals)
        for a, c in zip(rec.inputs, cots):
            if c is None or not isinstance(a, Var):
                continue
            if a.index in grads:
                grads[a.index] = grads[a.index] + c
            else:
                grads[a.index] = c
    return [grads.get(p.index, np.zeros_like(p.value)) for p in tape.params]
