"""Dense float64 tensors with tape-based reverse-mode differentiation.

Everything the model computes goes through the primitives in this module.
Each primitive validates shapes eagerly, computes its forward value with
numpy, and, when a :class:`GradTape` is active, records a backward rule so
that :meth:`GradTape.gradients` can replay the run in exact reverse order.

Broadcasting is deliberately narrow. ``add``/``sub``/``mul`` accept, besides
same-shape operands, exactly two vector patterns:

* a 1-D vector whose length matches the last axis of the other operand,
  replicated across the leading axis (bias addition), and
* a column vector of shape ``(rows, 1)`` against a 2-D operand, replicated
  across columns (per-row scaling, used by the attention mask).

Anything else raises :class:`DimensionError`; silent numpy broadcasting is
never used.
"""

from __future__ import annotations

import threading

import numpy as np

__all__ = [
    "DimensionError",
    "Tensor",
    "GradTape",
    "parameter",
    "constant",
    "matmul",
    "add",
    "sub",
    "mul",
    "sigmoid",
    "tanh",
    "softmax",
    "relu",
    "concat",
    "reshape",
    "take_rows",
    "slice_cols",
    "sum_axis",
    "sum_all",
    "cross_entropy",
    "backward",
]

PROB_CLAMP = 1e-12


class DimensionError(ValueError):
    """Raised when operand shapes do not satisfy an operation's contract."""


class Tensor:
    """A dense multi-dimensional array of float64 values.

    ``data`` is always a C-contiguous float64 ndarray. Parameters (leaves
    that receive gradients) are created with :func:`parameter`; everything
    else is either a constant input or the output of a primitive.
    """

    __slots__ = ("data", "name", "is_param")

    def __init__(self, data, name: str | None = None, is_param: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        self.data = arr
        self.name = name
        self.is_param = is_param

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape})"


def parameter(data, name: str | None = None) -> Tensor:
    """Create a trainable leaf tensor."""
    return Tensor(data, name=name, is_param=True)


def constant(data, name: str | None = None) -> Tensor:
    """Create a non-trainable input tensor."""
    return Tensor(data, name=name, is_param=False)


# One active tape per thread; forward passes with no active tape skip all
# recording (evaluation mode).
_active = threading.local()


def _current_tape():
    stack = getattr(_active, "stack", None)
    return stack[-1] if stack else None


class GradTape:
    """Ordered record of executed primitives for one forward pass.

    Used as a context manager::

        with GradTape() as tape:
            loss = cross_entropy(forward(...), label)
        grads = tape.gradients(loss)

    A tape and the tensors recorded on it belong to a single logical
    execution; concurrent passes must each use their own tape (the active
    tape is tracked per thread).
    """

    def __init__(self):
        # each record: (output, inputs tuple, backward fn)
        self._records = []
        self._params = []
        self._param_ids = set()

    def __enter__(self):
        stack = getattr(_active, "stack", None)
        if stack is None:
            stack = _active.stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _active.stack.pop()
        return False

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn):
        self._records.append((out, inputs, backward_fn))
        for t in inputs:
            if t.is_param and id(t) not in self._param_ids:
                self._param_ids.add(id(t))
                self._params.append(t)

    def gradients(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Gradient of a scalar loss w.r.t. every parameter on the tape.

        Replays the recorded primitives in exact reverse execution order.
        Every parameter that participated in the forward pass gets an entry,
        zero-filled if the loss does not depend on it. Deterministic given
        an identical forward execution.
        """
        if loss.data.size != 1:
            raise ValueError(
                f"loss must be a scalar, got shape {loss.data.shape}"
            )
        adjoint: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, inputs, backward_fn in reversed(self._records):
            out_grad = adjoint.get(id(out))
            if out_grad is None:
                continue
            for tensor, grad in backward_fn(out_grad):
                key = id(tensor)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + grad
                else:
                    adjoint[key] = grad
        result = {}
        for p in self._params:
            g = adjoint.get(id(p))
            if g is None:
                g = np.zeros_like(p.data)
            result[p] = np.asarray(g, dtype=np.float64).reshape(p.data.shape)
        return result


def backward(tape: GradTape, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Functional alias for :meth:`GradTape.gradients`."""
    return tape.gradients(loss)


def _emit(data, inputs, backward_fn) -> Tensor:
    out = Tensor(data)
    tape = _current_tape()
    if tape is not None:
        tape._record(out, inputs, backward_fn)
    return out


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(
            f"matmul needs 2-D operands, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul inner extents disagree: {a.data.shape} vs {b.data.shape}"
        )
    out_data = a.data @ b.data

    def bwd(g):
        return ((a, g @ b.data.T), (b, a.data.T @ g))

    return _emit(out_data, (a, b), bwd)


def _broadcast_mode(a: Tensor, b: Tensor) -> str:
    """Classify an elementwise operand pair; raise if unsupported."""
    sa, sb = a.data.shape, b.data.shape
    if sa == sb:
        return "same"
    if b.data.ndim == 1 and len(sa) >= 1 and sb[0] == sa[-1]:
        return "row"  # b replicated over the leading axes of a
    if a.data.ndim == 2 and b.data.ndim == 2 and sb == (sa[0], 1):
        return "col"  # b replicated across the columns of a
    raise DimensionError(f"incompatible elementwise shapes: {sa} vs {sb}")


def _reduce_to(grad: np.ndarray, mode: str, b_shape) -> np.ndarray:
    if mode == "same":
        return grad
    if mode == "row":
        return grad.reshape(-1, b_shape[0]).sum(axis=0)
    return grad.sum(axis=1, keepdims=True)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be a bias vector or a column vector."""
    mode = _broadcast_mode(a, b)
    out_data = a.data + b.data

    def bwd(g):
        return ((a, g), (b, _reduce_to(g, mode, b.data.shape)))

    return _emit(out_data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise difference; same broadcast rules as :func:`add`."""
    mode = _broadcast_mode(a, b)
    out_data = a.data - b.data

    def bwd(g):
        return ((a, g), (b, -_reduce_to(g, mode, b.data.shape)))

    return _emit(out_data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; same broadcast rules as :func:`add`."""
    mode = _broadcast_mode(a, b)
    out_data = a.data * b.data

    def bwd(g):
        ga = g * b.data
        gb = _reduce_to(g * a.data, mode, b.data.shape)
        return ((a, ga), (b, gb))

    return _emit(out_data, (a, b), bwd)


def sigmoid(x: Tensor) -> Tensor:
    """Numerically stable logistic function."""
    d = x.data
    out_data = np.empty_like(d)
    pos = d >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out_data[~pos] = e / (1.0 + e)

    def bwd(g):
        return ((x, g * out_data * (1.0 - out_data)),)

    return _emit(out_data, (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def bwd(g):
        return ((x, g * (1.0 - out_data * out_data)),)

    return _emit(out_data, (x,), bwd)


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0.0)

    def bwd(g):
        return ((x, g * (x.data > 0.0)),)

    return _emit(out_data, (x,), bwd)


def softmax(logits: Tensor) -> Tensor:
    """Probability vector from a 1-D logit vector, max-subtracted for
    stability. Output entries are nonnegative and sum to 1."""
    if logits.data.ndim != 1:
        raise DimensionError(
            f"softmax expects a 1-D vector, got shape {logits.data.shape}"
        )
    if logits.data.size == 0:
        raise ValueError("softmax of an empty vector is undefined")
    shifted = logits.data - logits.data.max()
    e = np.exp(shifted)
    out_data = e / e.sum()

    def bwd(g):
        inner = float(g @ out_data)
        return ((logits, out_data * (g - inner)),)

    return _emit(out_data, (logits,), bwd)


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    """Concatenate 2-D tensors along axis 0 or 1."""
    if not parts:
        raise ValueError("concat of an empty list")
    for p in parts:
        if p.data.ndim != 2:
            raise DimensionError(
                f"concat expects 2-D tensors, got shape {p.data.shape}"
            )
    if axis not in (0, 1):
        raise DimensionError(f"concat axis must be 0 or 1, got {axis}")
    other = 1 - axis
    ref = parts[0].data.shape[other]
    for p in parts[1:]:
        if p.data.shape[other] != ref:
            raise DimensionError(
                "concat operands disagree on axis "
                f"{other}: {[p.data.shape for p in parts]}"
            )
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    offsets = np.cumsum([0] + [p.data.shape[axis] for p in parts])

    def bwd(g):
        grads = []
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            grads.append((p, g[lo:hi] if axis == 0 else g[:, lo:hi]))
        return tuple(grads)

    return _emit(out_data, tuple(parts), bwd)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Row-major reshape; the element count must be preserved."""
    if int(np.prod(shape)) != x.data.size:
        raise DimensionError(
            f"cannot reshape {x.data.shape} ({x.data.size} elements) to {shape}"
        )
    out_data = x.data.reshape(shape)

    def bwd(g):
        return ((x, g.reshape(x.data.shape)),)

    return _emit(out_data, (x,), bwd)


def take_rows(x: Tensor, indices) -> Tensor:
    """Select rows of a 2-D tensor by index (repeats allowed).

    Gradient contributions scatter-add back into the source rows.
    """
    if x.data.ndim != 2:
        raise DimensionError(
            f"take_rows expects a 2-D tensor, got shape {x.data.shape}"
        )
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise DimensionError("take_rows indices must be 1-D")
    if idx.size and (idx.min() < 0 or idx.max() >= x.data.shape[0]):
        raise DimensionError(
            f"take_rows index out of range for {x.data.shape[0]} rows"
        )
    out_data = x.data[idx]

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return ((x, gx),)

    return _emit(out_data, (x,), bwd)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous column slice of a 2-D tensor."""
    if x.data.ndim != 2:
        raise DimensionError(
            f"slice_cols expects a 2-D tensor, got shape {x.data.shape}"
        )
    if not (0 <= start < stop <= x.data.shape[1]):
        raise DimensionError(
            f"column slice [{start}:{stop}] invalid for shape {x.data.shape}"
        )
    out_data = x.data[:, start:stop].copy()

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = g
        return ((x, gx),)

    return _emit(out_data, (x,), bwd)


def sum_axis(x: Tensor, axis: int) -> Tensor:
    """Sum over one axis (the axis is removed)."""
    if not (0 <= axis < x.data.ndim):
        raise DimensionError(
            f"axis {axis} out of range for shape {x.data.shape}"
        )
    out_data = x.data.sum(axis=axis)

    def bwd(g):
        return ((x, np.broadcast_to(np.expand_dims(g, axis), x.data.shape).copy()),)

    return _emit(out_data, (x,), bwd)


def sum_all(x: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    out_data = np.asarray(x.data.sum())

    def bwd(g):
        return ((x, np.ones_like(x.data) * g),)

    return _emit(out_data, (x,), bwd)


def cross_entropy(probs: Tensor, label: int) -> Tensor:
    """Negative log-likelihood of ``label`` under a probability vector.

    The picked probability is clamped below at ``PROB_CLAMP`` so the loss
    stays finite; inside the clamped region the gradient is zero.
    """
    if probs.data.ndim != 1:
        raise DimensionError(
            f"cross_entropy expects a 1-D vector, got shape {probs.data.shape}"
        )
    if not (0 <= label < probs.data.size):
        raise ValueError(
            f"label {label} out of range for {probs.data.size} classes"
        )
    p = probs.data[label]
    clamped = p < PROB_CLAMP
    out_data = np.asarray(-np.log(max(p, PROB_CLAMP)))

    def bwd(g):
        gp = np.zeros_like(probs.data)
        if not clamped:
            gp[label] = -float(g) / p
        return ((probs, gp),)

    return _emit(out_data, (probs,), bwd)
