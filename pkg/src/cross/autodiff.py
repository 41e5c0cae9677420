"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Tensors record a tape of parent edges as ops execute; calling
:func:`backward` on a scalar root walks the tape once in reverse
topological order and accumulates gradients. The op set is exactly what
the traffic policy networks need (no broadcasting, no views): matmul,
elementwise arithmetic, activations, softmax, layer norm, concat/slice,
row gather/scatter and block reductions. Everything is float64; graphs
are rebuilt on every forward pass.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for an op."""


def _check_same_shape(op: str, a: "Tensor", b: "Tensor") -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: operand shapes {a.data.shape} and {b.data.shape} do not match")


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (used during rollouts)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Dense float64 array participating in a reverse-mode gradient graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """A tensor sharing this data but cut out of the graph."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # Operator sugar; numbers are folded into the op, tensors must conform.
    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else shift(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else shift(self, -other)

    def __rsub__(self, other):
        return shift(neg(self), other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other) if isinstance(other, Tensor) else scale(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)


def _make(data: np.ndarray, op: str, parents: tuple, backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        out._op = op
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(tensor) into .grad of every reachable
    requires_grad tensor.

    Repeated calls without zeroing grads keep accumulating. The root must
    hold exactly one element.
    """
    if root.size != 1:
        raise ShapeError(f"backward: root must be scalar, got shape {root.data.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            _accum(node, g)
        if node._backward is not None:
            for parent, pg in node._backward(g):
                if not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] += pg
                else:
                    # Copy: ops may alias the incoming gradient (e.g. add).
                    grads[key] = np.array(pg)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    return _make(a.data + b.data, "add", (a, b), lambda g: ((a, g), (b, g)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)
    return _make(a.data - b.data, "sub", (a, b), lambda g: ((a, g), (b, -g)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)
    return _make(a.data * b.data, "mul", (a, b), lambda g: ((a, g * b.data), (b, g * a.data)))


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("div", a, b)
    out = a.data / b.data

    def back(g):
        return ((a, g / b.data), (b, -g * out / b.data))

    return _make(out, "div", (a, b), back)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, "neg", (a,), lambda g: ((a, -g),))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, "scale", (a,), lambda g: ((a, g * c),))


def shift(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data + c, "shift", (a,), lambda g: ((a, g),))


# ---------------------------------------------------------------------------
# linear algebra and shape ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: shapes {a.data.shape} and {b.data.shape} do not conform")

    def back(g):
        return ((a, g @ b.data.T), (b, a.data.T @ g))

    return _make(a.data @ b.data, "matmul", (a, b), back)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected 2-d tensor, got shape {a.data.shape}")
    return _make(a.data.T.copy(), "transpose", (a,), lambda g: ((a, g.T),))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.data.shape
    if int(np.prod(shape)) != a.size:
        raise ShapeError(f"reshape: cannot reshape {old} to {shape}")
    return _make(a.data.reshape(shape), "reshape", (a,), lambda g: ((a, g.reshape(old)),))


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat: empty tensor list")
    ndim = tensors[0].data.ndim
    for t in tensors[1:]:
        if t.data.ndim != ndim:
            raise ShapeError(
                f"concat: rank mismatch {tensors[0].data.shape} vs {t.data.shape}")
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        return tuple(
            (t, np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis))
            for i, t in enumerate(tensors)
        )

    return _make(np.concatenate([t.data for t in tensors], axis=axis), "concat", tuple(tensors), back)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    n = a.data.shape[axis]
    if not (0 <= start <= stop <= n):
        raise ShapeError(f"slice: [{start}:{stop}] out of range for shape {a.data.shape} axis {axis}")
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def back(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return ((a, full),)

    return _make(a.data[idx].copy(), "slice", (a,), back)


def take_rows(a: Tensor, idx) -> Tensor:
    """Select rows of a 2-d tensor; duplicate indices accumulate on backward."""
    idx = np.asarray(idx, dtype=np.intp)

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return ((a, full),)

    return _make(a.data[idx].copy(), "take_rows", (a,), back)


def gather_cols(a: Tensor, cols) -> Tensor:
    """Per-row column gather: out[i, j] = a[i, cols[i, j]] for a 2-d tensor."""
    cols = np.asarray(cols, dtype=np.intp)
    if cols.ndim == 1:
        cols = cols[:, None]
    if cols.shape[0] != a.data.shape[0]:
        raise ShapeError(f"gather_cols: {cols.shape[0]} index rows for {a.data.shape[0]} tensor rows")
    rows = np.arange(a.data.shape[0])[:, None]

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (np.broadcast_to(rows, cols.shape), cols), g)
        return ((a, full),)

    return _make(a.data[rows, cols].copy(), "gather_cols", (a,), back)


def scatter_rows(a: Tensor, idx, n_rows: int) -> Tensor:
    """Place rows of a into a zero (n_rows, d) tensor at positions idx,
    accumulating duplicates."""
    idx = np.asarray(idx, dtype=np.intp)
    if idx.shape[0] != a.data.shape[0]:
        raise ShapeError(f"scatter_rows: {idx.shape[0]} indices for {a.data.shape[0]} rows")
    out = np.zeros((n_rows,) + a.data.shape[1:])
    np.add.at(out, idx, a.data)
    return _make(out, "scatter_rows", (a,), lambda g: ((a, g[idx]),))


def repeat_rows(a: Tensor, k: int) -> Tensor:
    """Repeat each row k consecutive times: (n, d) -> (n*k, d)."""
    n = a.data.shape[0]

    def back(g):
        return ((a, g.reshape(n, k, *a.data.shape[1:]).sum(axis=1)),)

    return _make(np.repeat(a.data, k, axis=0), "repeat_rows", (a,), back)


def segment_sum(a: Tensor, k: int) -> Tensor:
    """Sum consecutive groups of k rows: (n*k, d) -> (n, d)."""
    total = a.data.shape[0]
    if total % k:
        raise ShapeError(f"segment_sum: {total} rows not divisible by {k}")
    n = total // k

    def back(g):
        return ((a, np.repeat(g, k, axis=0)),)

    return _make(a.data.reshape(n, k, *a.data.shape[1:]).sum(axis=1), "segment_sum", (a,), back)


def repeat_cols(a: Tensor, k: int) -> Tensor:
    """Tile a (n, 1) column to (n, k)."""
    if a.data.ndim != 2 or a.data.shape[1] != 1:
        raise ShapeError(f"repeat_cols: expected (n, 1), got {a.data.shape}")
    return _make(np.repeat(a.data, k, axis=1), "repeat_cols", (a,),
                 lambda g: ((a, g.sum(axis=1, keepdims=True)),))


# ---------------------------------------------------------------------------
# reductions


def tsum(a: Tensor) -> Tensor:
    shape = a.data.shape
    return _make(np.asarray(a.data.sum()), "sum", (a,),
                 lambda g: ((a, np.full(shape, float(g))),))


def sum_axis(a: Tensor, axis: int) -> Tensor:
    """Sum along one axis, keeping it as size 1."""
    def back(g):
        return ((a, np.repeat(g, a.data.shape[axis], axis=axis)),)

    return _make(a.data.sum(axis=axis, keepdims=True), "sum_axis", (a,), back)


def tmean(a: Tensor) -> Tensor:
    return scale(tsum(a), 1.0 / a.size)


# ---------------------------------------------------------------------------
# nonlinearities


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _make(out, "sigmoid", (a,), lambda g: ((a, g * out * (1.0 - out)),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, "tanh", (a,), lambda g: ((a, g * (1.0 - out * out)),))


def relu(a: Tensor) -> Tensor:
    mask = (a.data > 0).astype(np.float64)
    return _make(a.data * mask, "relu", (a,), lambda g: ((a, g * mask),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, "exp", (a,), lambda g: ((a, g * out),))


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), "log", (a,), lambda g: ((a, g / a.data),))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _make(out, "sqrt", (a,), lambda g: ((a, g * 0.5 / out),))


def minimum(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("minimum", a, b)
    take_a = (a.data <= b.data).astype(np.float64)
    return _make(np.minimum(a.data, b.data), "minimum", (a, b),
                 lambda g: ((a, g * take_a), (b, g * (1.0 - take_a))))


def maximum(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("maximum", a, b)
    take_a = (a.data >= b.data).astype(np.float64)
    return _make(np.maximum(a.data, b.data), "maximum", (a, b),
                 lambda g: ((a, g * take_a), (b, g * (1.0 - take_a))))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = ((a.data >= lo) & (a.data <= hi)).astype(np.float64)
    return _make(np.clip(a.data, lo, hi), "clip", (a,), lambda g: ((a, g * inside),))


def softmax(a: Tensor, axis: int = -1, temperature: float = 1.0) -> Tensor:
    """Temperature softmax along one axis, computed with max subtraction."""
    if temperature <= 0:
        raise ValueError(f"softmax: temperature must be positive, got {temperature}")
    z = a.data / temperature
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return ((a, (g - inner) * out / temperature),)

    return _make(out, "softmax", (a,), back)


def layer_norm(a: Tensor, eps: float = 1e-8) -> Tensor:
    """Normalize each row of the last axis to zero mean, unit variance (no affine)."""
    mu = a.data.mean(axis=-1, keepdims=True)
    var = a.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    out = (a.data - mu) * inv

    def back(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * out).mean(axis=-1, keepdims=True)
        return ((a, inv * (g - gm - out * gy)),)

    return _make(out, "layer_norm", (a,), back)


# ---------------------------------------------------------------------------
# composites used across the networks


def glu(a: Tensor) -> Tensor:
    """Gated linear unit: split the last axis into (value, gate) halves,
    return value * sigmoid(gate)."""
    d = a.data.shape[-1]
    if d % 2:
        raise ShapeError(f"glu: last axis must be even, got shape {a.data.shape}")
    axis = a.data.ndim - 1
    value = slice_axis(a, axis, 0, d // 2)
    gate = slice_axis(a, axis, d // 2, d)
    return mul(value, sigmoid(gate))


def cosine_similarity(a: Tensor, b: Tensor, eps: float = 1e-8) -> Tensor:
    """Row-wise cosine similarity of two (n, d) tensors -> (n, 1).

    Norms are guarded: ||x|| is computed as sqrt(sum(x^2) + eps^2), so a
    zero-norm row yields similarity 0 with bounded gradients.
    """
    _check_same_shape("cosine_similarity", a, b)
    dots = sum_axis(mul(a, b), 1)
    na = sqrt(shift(sum_axis(mul(a, a), 1), eps * eps))
    nb = sqrt(shift(sum_axis(mul(b, b), 1), eps * eps))
    return div(dots, mul(na, nb))


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error over all entries."""
    _check_same_shape("mse", a, b)
    d = sub(a, b)
    return tmean(mul(d, d))


def masked_mean(values: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of entries where mask is nonzero; mask is a constant array."""
    mask = np.asarray(mask, dtype=np.float64)
    count = mask.sum()
    if count == 0:
        raise ShapeError("masked_mean: mask selects no entries")
    return scale(tsum(mul(values, Tensor(mask))), 1.0 / count)


# ---------------------------------------------------------------------------
# optimization


class Adam:
    """Bias-corrected Adam over a fixed parameter list.

    One step() call advances the shared step count by exactly 1 and updates
    every parameter from its .grad; grads are left untouched for the caller
    to zero.
    """

    def __init__(self, params: list[Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr < 0:
            raise ValueError(f"Adam: negative learning rate {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.first_moment = [np.zeros_like(p.data) for p in self.params]
        self.second_moment = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ValueError(f"Adam: parameter {i} has no gradient")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self.first_moment, self.second_moment):
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def clip_grad_norm(params: list[Tensor], max_norm: float) -> float:
    """Scale all grads so their global L2 norm is at most max_norm.

    Returns the pre-clip norm.
    """
    if max_norm <= 0:
        raise ValueError(f"clip_grad_norm: max_norm must be positive, got {max_norm}")
    total = 0.0
    for p in params:
        if p.grad is None:
            raise ValueError("clip_grad_norm: parameter has no gradient")
        total += float((p.grad * p.grad).sum())
    norm = math.sqrt(total)
    if norm > max_norm:
        factor = max_norm / norm
        for p in params:
            p.grad *= factor
    return norm
