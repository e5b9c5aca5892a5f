"""Dense float64 tensors with a dynamic reverse-mode tape.

Everything in this package differentiates through the same small set of
primitives: elementwise arithmetic, matmul/affine, tanh/gelu/exp/square,
reductions and an embedding gather.  A Tape records nodes in construction
order (parents always precede children), so the backward pass is a single
reverse sweep with no topological sort.

Tensors that are not attached to a tape behave as constants: running the
same forward code with constant inputs gives plain numpy evaluation with
no recording overhead.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "NumericError",
    "Tape",
    "Tensor",
    "add",
    "sub",
    "neg",
    "mul",
    "matmul",
    "affine",
    "tanh",
    "gelu",
    "exp",
    "square",
    "tsum",
    "tmean",
    "embedding",
    "backward",
    "Gradients",
    "finite_difference_gradient",
]

_GELU_C = float(np.sqrt(2.0 / np.pi))


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class NumericError(ArithmeticError):
    """A computation produced NaN/Inf where finite values are required."""


class Tape:
    """Append-only record of operations; parents of node i have index < i."""

    def __init__(self) -> None:
        self.nodes: list[tuple] = []  # (kind, parent ids, cached value, vjp)

    def __len__(self) -> int:
        return len(self.nodes)

    def _record(self, kind, parents, value, vjp) -> int:
        self.nodes.append((kind, parents, value, vjp))
        return len(self.nodes) - 1

    def leaf(self, data, name: str | None = None) -> "Tensor":
        """Register an input/parameter tensor whose gradient will be tracked."""
        arr = _as_array(data)
        node = self._record("leaf" if name is None else f"leaf:{name}", (), arr, None)
        return Tensor._internal(arr, self, node)


class Tensor:
    """Dense float64 array, optionally attached to a Tape node.

    Construction from external data rejects NaN/Inf; values produced by
    tape operations are exact real arithmetic on already-validated inputs.
    """

    __slots__ = ("data", "tape", "node")

    def __init__(self, data):
        arr = _as_array(data)
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor constructed from non-finite data")
        self.data = arr
        self.tape = None
        self.node = -1

    @classmethod
    def _internal(cls, arr: np.ndarray, tape, node: int) -> "Tensor":
        t = object.__new__(cls)
        t.data = arr
        t.tape = tape
        t.node = node
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = "" if self.tape is None else f", node={self.node}"
        return f"Tensor({self.data!r}{tag})"

    # operator sugar; all routing goes through the module-level primitives
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return arr


def _lift(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _tape_of(*ts: Tensor):
    tape = None
    for t in ts:
        if t.tape is not None:
            if tape is None:
                tape = t.tape
            elif tape is not t.tape:
                raise ValueError("operands were recorded on different tapes")
    return tape


def _emit(tape, kind: str, parents: Sequence[Tensor], value: np.ndarray, vjp) -> Tensor:
    """Record a node whose vjp covers exactly the tape-attached parents."""
    if tape is None:
        return Tensor._internal(value, None, -1)
    ids = tuple(p.node for p in parents if p.tape is not None)
    node = tape._record(kind, ids, value, vjp)
    return Tensor._internal(value, tape, node)


def _check_elementwise(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape and a.data.ndim != 0 and b.data.ndim != 0:
        raise ShapeError(
            f"{op}: shapes {a.data.shape} and {b.data.shape} do not match "
            "(equal shapes or scalar broadcast only)"
        )


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Collapse a gradient onto a scalar operand."""
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape)


# ---------------------------------------------------------------------------
# primitives


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_elementwise(a, b, "add")
    out = a.data + b.data
    tape = _tape_of(a, b)
    if tape is None:
        return _emit(None, "add", (), out, None)

    # vjp closures must capture plain arrays/flags, never Tensors: a Tensor
    # points back at the tape and would create uncollectable cycles
    need_a, need_b = a.tape is not None, b.tape is not None
    sa, sb = a.data.shape, b.data.shape

    def vjp(g):
        grads = []
        if need_a:
            grads.append(_reduce_to(g, sa))
        if need_b:
            grads.append(_reduce_to(g, sb))
        return grads

    return _emit(tape, "add", (a, b), out, vjp)


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_elementwise(a, b, "sub")
    out = a.data - b.data
    tape = _tape_of(a, b)
    if tape is None:
        return _emit(None, "sub", (), out, None)

    need_a, need_b = a.tape is not None, b.tape is not None
    sa, sb = a.data.shape, b.data.shape

    def vjp(g):
        grads = []
        if need_a:
            grads.append(_reduce_to(g, sa))
        if need_b:
            grads.append(_reduce_to(-g, sb))
        return grads

    return _emit(tape, "sub", (a, b), out, vjp)


def neg(a) -> Tensor:
    a = _lift(a)
    out = -a.data
    tape = _tape_of(a)
    if tape is None:
        return _emit(None, "neg", (), out, None)
    return _emit(tape, "neg", (a,), out, lambda g: [-g])


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_elementwise(a, b, "mul")
    out = a.data * b.data
    tape = _tape_of(a, b)
    if tape is None:
        return _emit(None, "mul", (), out, None)

    need_a, need_b = a.tape is not None, b.tape is not None
    da, db = a.data, b.data

    def vjp(g):
        grads = []
        if need_a:
            grads.append(_reduce_to(g * db, da.shape))
        if need_b:
            grads.append(_reduce_to(g * da, db.shape))
        return grads

    return _emit(tape, "mul", (a, b), out, vjp)


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(
            f"matmul: expected 2-d operands, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions differ, {a.data.shape} @ {b.data.shape}"
        )
    out = a.data @ b.data
    tape = _tape_of(a, b)
    if tape is None:
        return _emit(None, "matmul", (), out, None)

    need_a, need_b = a.tape is not None, b.tape is not None
    da, db = a.data, b.data

    def vjp(g):
        grads = []
        if need_a:
            grads.append(g @ db.T)
        if need_b:
            grads.append(da.T @ g)
        return grads

    return _emit(tape, "matmul", (a, b), out, vjp)


def affine(x, w, b) -> Tensor:
    """x @ w + b for x of shape (m, in) or (in,); bias broadcasts over rows."""
    x, w, b = _lift(x), _lift(w), _lift(b)
    if w.data.ndim != 2:
        raise ShapeError(f"affine: weight must be 2-d, got {w.data.shape}")
    if x.data.ndim not in (1, 2) or x.data.shape[-1] != w.data.shape[0]:
        raise ShapeError(f"affine: input {x.data.shape} incompatible with weight {w.data.shape}")
    if b.data.shape != (w.data.shape[1],):
        raise ShapeError(f"affine: bias {b.data.shape} incompatible with weight {w.data.shape}")
    out = x.data @ w.data + b.data
    tape = _tape_of(x, w, b)
    if tape is None:
        return _emit(None, "affine", (), out, None)

    need_x, need_w, need_b = x.tape is not None, w.tape is not None, b.tape is not None
    dx, dw = x.data, w.data

    def vjp(g):
        grads = []
        if need_x:
            grads.append(g @ dw.T)
        if need_w:
            grads.append(np.outer(dx, g) if dx.ndim == 1 else dx.T @ g)
        if need_b:
            grads.append(g if g.ndim == 1 else g.sum(axis=0))
        return grads

    return _emit(tape, "affine", (x, w, b), out, vjp)


def tanh(a) -> Tensor:
    a = _lift(a)
    out = np.tanh(a.data)
    tape = _tape_of(a)
    if tape is None:
        return _emit(None, "tanh", (), out, None)
    return _emit(tape, "tanh", (a,), out, lambda g: [g * (1.0 - out * out)])


def gelu(a) -> Tensor:
    """Gaussian-error-linear unit (tanh form), 0.5*x*(1+tanh(c*(x+0.044715*x^3)))."""
    a = _lift(a)
    x = a.data
    x3 = x * x * x
    th = np.tanh(_GELU_C * (x + 0.044715 * x3))
    out = 0.5 * x * (1.0 + th)
    tape = _tape_of(a)
    if tape is None:
        return _emit(None, "gelu", (), out, None)

    def vjp(g):
        sech2 = 1.0 - th * th
        inner = _GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
        return [g * (0.5 * (1.0 + th) + 0.5 * x * sech2 * inner)]

    return _emit(tape, "gelu", (a,), out, vjp)


def exp(a) -> Tensor:
    a = _lift(a)
    out = np.exp(a.data)
    tape = _tape_of(a)
    if tape is None:
        return _emit(None, "exp", (), out, None)
    return _emit(tape, "exp", (a,), out, lambda g: [g * out])


def square(a) -> Tensor:
    a = _lift(a)
    out = a.data * a.data
    tape = _tape_of(a)
    if tape is None:
        return _emit(None, "square", (), out, None)
    da = a.data
    return _emit(tape, "square", (a,), out, lambda g: [2.0 * g * da])


def tsum(a, axis: int | None = None) -> Tensor:
    a = _lift(a)
    out = np.sum(a.data, axis=axis)
    tape = _tape_of(a)
    if tape is None:
        return _emit(None, "sum", (), out, None)
    shape = a.data.shape

    def vjp(g):
        if axis is None:
            return [np.broadcast_to(g, shape)]
        return [np.broadcast_to(np.expand_dims(g, axis), shape)]

    return _emit(tape, "sum", (a,), out, vjp)


def tmean(a, axis: int | None = None) -> Tensor:
    a = _lift(a)
    out = np.mean(a.data, axis=axis)
    tape = _tape_of(a)
    if tape is None:
        return _emit(None, "mean", (), out, None)
    shape = a.data.shape
    count = a.data.size if axis is None else shape[axis]

    def vjp(g):
        if axis is None:
            return [np.broadcast_to(g / count, shape)]
        return [np.broadcast_to(np.expand_dims(g / count, axis), shape)]

    return _emit(tape, "mean", (a,), out, vjp)


def embedding(table, idx) -> Tensor:
    """Row gather: table (rows, dim) indexed by an integer vector."""
    table = _lift(table)
    idx = np.asarray(idx)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError("embedding: indices must be integers")
    if table.data.ndim != 2 or idx.ndim != 1:
        raise ShapeError(
            f"embedding: expected 2-d table and 1-d indices, got {table.data.shape} and {idx.shape}"
        )
    out = table.data[idx]
    tape = _tape_of(table)
    if tape is None:
        return _emit(None, "embedding", (), out, None)
    rows = table.data.shape

    def vjp(g):
        acc = np.zeros(rows)
        np.add.at(acc, idx, g)
        return [acc]

    return _emit(tape, "embedding", (table,), out, vjp)


# ---------------------------------------------------------------------------
# backward pass


class Gradients:
    """Adjoints of one backward sweep, addressable by leaf tensor."""

    def __init__(self, tape: Tape, adjoints: list):
        self._tape = tape
        self._adjoints = adjoints

    def wrt(self, t: Tensor) -> np.ndarray:
        if t.tape is not self._tape:
            raise ValueError("tensor does not belong to the differentiated tape")
        g = self._adjoints[t.node] if t.node < len(self._adjoints) else None
        if g is None:
            return np.zeros_like(t.data)
        return g

    def __getitem__(self, t: Tensor) -> np.ndarray:
        return self.wrt(t)


def backward(root: Tensor) -> Gradients:
    """Reverse sweep from a scalar root; exact chain rule over the tape."""
    tape = root.tape
    if tape is None:
        raise ValueError("backward: root is not attached to a tape")
    if root.data.ndim != 0:
        raise ShapeError(f"backward: root must be scalar, got shape {root.data.shape}")
    nodes = tape.nodes
    adjoints: list = [None] * len(nodes)
    adjoints[root.node] = np.ones(())
    # A node's adjoint is final before its vjp runs (children have larger
    # indices), so seeding by reference is safe: accumulation below is
    # out-of-place and never mutates a seeded array or view.
    for i in range(root.node, -1, -1):
        g = adjoints[i]
        if g is None:
            continue
        _, parents, _, vjp = nodes[i]
        if vjp is None:
            continue
        for pid, pg in zip(parents, vjp(g)):
            if adjoints[pid] is None:
                adjoints[pid] = pg
            else:
                adjoints[pid] = adjoints[pid] + pg
    return Gradients(tape, adjoints)


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient oracle, (f(x+h e_i) - f(x-h e_i)) / 2h."""
    if h <= 0:
        raise ValueError("finite_difference_gradient: h must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"finite_difference_gradient: non-finite f at coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad
