"""Dense-tensor engine with reverse-mode differentiation on a tape.

Design: plain numpy arrays for storage, greedy primitives only, and an
explicit :class:`Tape` that records every primitive in execution order.
``backward`` replays the records once, in reverse. Training runs in
float32; building a model with float64 arrays gives the shadow mode the
gradient checker uses.

Ops executed while no tape is active skip recording entirely, which is
the cheap evaluation path.
"""

from __future__ import annotations

import threading
import warnings

import numpy as np

from .errors import ShapeMismatch

DEFAULT_DTYPE = np.float32

_state = threading.local()


def _tape_stack() -> list:
    if not hasattr(_state, "tapes"):
        _state.tapes = []
    return _state.tapes


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A dense array plus its place in the autodiff graph."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(_as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return mul(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


class _Record:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out: Tensor, inputs: tuple, backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of primitives; context manager marks it active."""

    def __init__(self):
        self.records: list[_Record] = []
        # ids of tensors produced by recorded ops; records keep those
        # tensors alive, so ids cannot be recycled while the tape lives
        self._computed_ids: set[int] = set()

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        popped = _tape_stack().pop()
        assert popped is self, "tapes must nest"
        return False

    def backward(self, loss: Tensor, params: list[Tensor] | None = None) -> None:
        """Reverse-mode sweep from a scalar loss.

        Populates ``.grad`` on every reachable ``requires_grad`` tensor.
        If ``params`` is given, parameters the loss does not depend on get
        zero gradients and a warning (disconnected graph).
        """
        if loss.data.size != 1:
            raise ShapeMismatch("backward needs a scalar loss")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for rec in reversed(self.records):
            gout = grads.pop(id(rec.out), None)
            if gout is None:
                continue
            for tensor, grad in zip(rec.inputs, rec.backward(gout)):
                if tensor is None or grad is None:
                    continue
                if not (tensor.requires_grad or id(tensor) in self._computed_ids):
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + grad
                else:
                    grads[key] = grad
        # surviving entries belong to leaves
        leaves = {id(t): t for rec in self.records for t in rec.inputs
                  if isinstance(t, Tensor) and t.requires_grad}
        leaves[id(loss)] = loss
        for key, grad in grads.items():
            leaf = leaves.get(key)
            if leaf is not None and leaf.requires_grad:
                leaf.grad = grad if leaf.grad is None else leaf.grad + grad
        if params is not None:
            for p in params:
                if p.grad is None:
                    warnings.warn("loss does not depend on a parameter; gradient set to zero",
                                  stacklevel=2)
                    p.grad = np.zeros_like(p.data)


def backward(tape: Tape, loss: Tensor, params: list[Tensor] | None = None) -> None:
    tape.backward(loss, params)


def _record(out: Tensor, inputs: tuple, backward_fn) -> Tensor:
    tape = _active_tape()
    if tape is not None and any(
        isinstance(t, Tensor) and (t.requires_grad or id(t) in tape._computed_ids)
        for t in inputs
    ):
        tape.records.append(_Record(out, inputs, backward_fn))
        tape._computed_ids.add(id(out))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to the shape its operand had before broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.data.shape),
                                           _unbroadcast(g, b.data.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.data.shape),
                                           _unbroadcast(-g, b.data.shape)))


def neg(a: Tensor) -> Tensor:
    return _record(Tensor(-a.data), (a,), lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g * b.data, a.data.shape),
                                           _unbroadcast(g * a.data, b.data.shape)))


def div(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data / b.data)

    def back(g):
        return (_unbroadcast(g / b.data, a.data.shape),
                _unbroadcast(-g * a.data / (b.data ** 2), b.data.shape))

    return _record(out, (a, b), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 1 or b.data.ndim < 2:
        raise ShapeMismatch(f"matmul needs matrices, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeMismatch(f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")
    out = Tensor(np.matmul(a.data, b.data))

    def back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (_unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape))

    return _record(out, (a, b), back)


def relu(x: Tensor) -> Tensor:
    trace = getattr(_state, "relu_trace", None)
    if trace is not None:
        trace.append(x.data > 0)
    out = Tensor(np.maximum(x.data, 0))
    return _record(out, (x,), lambda g: (g * (x.data > 0),))


def sigmoid(x: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-x.data))
    out = Tensor(y)
    return _record(out, (x,), lambda g: (g * y * (1.0 - y),))


def softmax(x: Tensor, blocked: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; ``blocked`` positions get weight exactly 0.

    Rows with every position blocked come out all-zero.
    """
    z = x.data
    if blocked is not None:
        masked = np.where(blocked, -np.inf, z)
    else:
        masked = z
    m = masked.max(axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)  # all-blocked rows
    e = np.exp(masked - m)
    e = np.where(np.isfinite(e), e, 0.0)
    denom = e.sum(axis=-1, keepdims=True)
    y = np.divide(e, denom, out=np.zeros_like(e), where=denom > 0)
    out = Tensor(y)

    def back(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - inner),)

    return _record(out, (x,), back)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor(gain.data * xhat + bias.data)
    n = x.data.shape[-1]

    def back(g):
        gxhat = g * gain.data
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        ggain = _unbroadcast(g * xhat, gain.data.shape)
        gbias = _unbroadcast(g, bias.data.shape)
        return (gx.astype(x.dtype, copy=False), ggain, gbias)

    return _record(out, (x, gain, bias), back)


def embedding(table: Tensor, indices: np.ndarray) -> Tensor:
    """Row gather: output shape = indices.shape + (width,)."""
    idx = np.asarray(indices)
    out = Tensor(table.data[idx])

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx.reshape(-1), g.reshape(-1, table.data.shape[-1]))
        return (gt,)

    return _record(out, (table,), back)


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    return _record(out, (x,), lambda g: (g.reshape(x.data.shape),))


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = Tensor(x.data.transpose(axes))
    return _record(out, (x,), lambda g: (g.transpose(inv),))


def swap_last(x: Tensor) -> Tensor:
    axes = list(range(x.data.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def concat(parts: list[Tensor], axis: int) -> Tensor:
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        grads = []
        for i in range(len(parts)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(sl)])
        return tuple(grads)

    return _record(out, tuple(parts), back)


def index(x: Tensor, key) -> Tensor:
    """Basic slicing/integer indexing with gradient scatter-back."""
    out = Tensor(x.data[key])

    def back(g):
        gx = np.zeros_like(x.data)
        gx[key] = g
        return (gx,)

    return _record(out, (x,), back)


def broadcast_to(x: Tensor, shape) -> Tensor:
    out = Tensor(np.broadcast_to(x.data, shape).copy())
    return _record(out, (x,), lambda g: (_unbroadcast(g, x.data.shape),))


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).copy(),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, x.data.shape).copy(),)

    return _record(out, (x,), back)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else x.data.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims),
               Tensor(np.asarray(1.0 / count, dtype=x.dtype)))


def cross_entropy(logits: Tensor, targets: np.ndarray,
                  ignore_index: int | None = None) -> Tensor:
    """Mean softmax cross-entropy over non-ignored targets.

    ``logits``: [N, C]; ``targets``: int array [N].
    """
    t = np.asarray(targets)
    if logits.data.ndim != 2 or t.shape != (logits.data.shape[0],):
        raise ShapeMismatch(
            f"cross_entropy got logits {logits.data.shape}, targets {t.shape}")
    valid = np.ones(t.shape, dtype=bool) if ignore_index is None else t != ignore_index
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ShapeMismatch("cross_entropy: every target is ignored")
    z = logits.data
    m = z.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(z - m).sum(axis=-1, keepdims=True))
    logp = z - lse
    safe_t = np.where(valid, t, 0)
    picked = logp[np.arange(len(t)), safe_t]
    loss = -(picked * valid).sum() / n_valid
    out = Tensor(np.asarray(loss, dtype=logits.dtype))

    def back(g):
        p = np.exp(logp)
        p[np.arange(len(t)), safe_t] -= 1.0
        p *= (valid / n_valid)[:, None]
        return (g * p.astype(logits.dtype, copy=False),)

    return _record(out, (logits,), back)


# ---------------------------------------------------------------------------
# relu kink tracing (used by the gradient checker)
# ---------------------------------------------------------------------------

class relu_sign_trace:
    """Collect the sign pattern of every relu input inside the block."""

    def __enter__(self):
        self.signs: list[np.ndarray] = []
        _state.relu_trace = self.signs
        return self

    def __exit__(self, *exc):
        _state.relu_trace = None
        return False


def traces_differ(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    if len(a) != len(b):
        return True
    return any(x.shape != y.shape or not np.array_equal(x, y) for x, y in zip(a, b))
