"""Dense f64 tensors with reverse-mode automatic differentiation.

Everything trains in 64-bit floats so that central-difference gradient
checks are meaningful down to ~1e-6 relative error. The op set is closed
and deliberately small: matmul, elementwise add/sub/mul, exp, tanh,
(log_)softmax, layer norm, row gather (embedding lookup doubles as row
selection), index gather, and full/axis reductions. A causal transformer
plus a reverse-KL loss is composed from exactly these.

Graphs are implicit: each Tensor produced by an op records its parents and
a backward closure; ``backward`` topologically sorts the reachable graph
and accumulates gradients into every ``requires_grad`` leaf. Recording is
skipped when no input requires grad or inside ``no_grad()``, so the same
forward code serves both training and plain inference bit-identically.
"""

from __future__ import annotations

import numpy as np


class NumericError(ValueError):
    """Non-finite values where finite ones are required."""


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested op."""


_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """A dense float64 array plus optional autodiff bookkeeping.

    data is always a C-contiguous float64 ndarray; shape/size are the
    numpy ones. ``grad`` is populated by ``backward`` and has the same
    shape as ``data``.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """A view on the same buffer with no grad and no history."""
        t = Tensor.__new__(Tensor)
        t.data = self.data
        t.requires_grad = False
        t.grad = None
        t._parents = ()
        t._backward = None
        return t

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # small amount of sugar; module-level functions are the real API
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(data) -> Tensor:
    """A non-trainable tensor (teacher targets, masks)."""
    return Tensor(data, requires_grad=False)


# ---------------------------------------------------------------------------
# elementwise and linear ops


def _binary_shapes(a: Tensor, b: Tensor, op: str):
    if a.data.shape == b.data.shape:
        return "same"
    if b.data.ndim == 0:
        return "scalar"
    # bias broadcast: (..., d) op (d,)
    if b.data.ndim == 1 and a.data.ndim >= 1 and a.data.shape[-1] == b.data.shape[0]:
        return "bias"
    raise ShapeError(f"{op}: incompatible shapes {a.data.shape} vs {b.data.shape}")


def _reduce_to(g: np.ndarray, mode: str, shape) -> np.ndarray:
    if mode == "same":
        return g
    if mode == "scalar":
        return np.asarray(g.sum())
    # bias: sum over all leading axes
    return g.reshape(-1, shape[0]).sum(axis=0)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    mode = _binary_shapes(a, b, "add")

    def backward(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, _reduce_to(g, mode, b.data.shape))

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    mode = _binary_shapes(a, b, "sub")

    def backward(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, -_reduce_to(g, mode, b.data.shape))

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    mode = _binary_shapes(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            _accum(a, g * b.data)
        if b.requires_grad:
            _accum(b, _reduce_to(g * a.data, mode, b.data.shape))

    return _result(a.data * b.data, (a, b), backward)


def scale(a, c: float) -> Tensor:
    """Multiply by a python scalar constant."""
    a = _as_tensor(a)
    c = float(c)

    def backward(g):
        if a.requires_grad:
            _accum(a, g * c)

    return _result(a.data * c, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.data.shape} @ {b.data.shape}")

    def backward(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), backward)


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError("transpose expects a 2-D tensor")

    def backward(g):
        if a.requires_grad:
            _accum(a, g.T)

    return _result(np.ascontiguousarray(a.data.T), (a,), backward)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            _accum(a, g * out_data)

    return _result(out_data, (a,), backward)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            _accum(a, g * (1.0 - out_data * out_data))

    return _result(out_data, (a,), backward)


# ---------------------------------------------------------------------------
# normalizations


def _check_finite(x: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{op}: non-finite input")


def softmax(a) -> Tensor:
    """Row-stable softmax along the last axis."""
    a = _as_tensor(a)
    _check_finite(a.data, "softmax")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        if a.requires_grad:
            dot = (g * out_data).sum(axis=-1, keepdims=True)
            _accum(a, out_data * (g - dot))

    return _result(out_data, (a,), backward)


def log_softmax(a) -> Tensor:
    """Row-stable log-softmax along the last axis (max subtraction)."""
    a = _as_tensor(a)
    if a.data.shape[-1] < 1:
        raise ShapeError("log_softmax: last axis must have length >= 1")
    _check_finite(a.data, "log_softmax")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out_data = shifted - lse

    def backward(g):
        if a.requires_grad:
            soft = np.exp(out_data)
            _accum(a, g - soft * g.sum(axis=-1, keepdims=True))

    return _result(out_data, (a,), backward)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply elementwise gain and bias."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError("layer_norm: gain/bias must match the last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gain.data + bias.data

    def backward(g):
        if gain.requires_grad:
            _accum(gain, (g * xhat).reshape(-1, d).sum(axis=0))
        if bias.requires_grad:
            _accum(bias, g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            dxhat = g * gain.data
            term = dxhat - dxhat.mean(axis=-1, keepdims=True) \
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            _accum(x, inv * term)

    return _result(out_data, (x, gain, bias), backward)


# ---------------------------------------------------------------------------
# gathers and reductions


def take_rows(a, ids) -> Tensor:
    """Gather rows of a 2-D tensor: embedding lookup and row selection."""
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError("take_rows expects a 2-D tensor")
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError("take_rows expects a 1-D index array")
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise ShapeError("take_rows: index out of range")

    def backward(g):
        if a.requires_grad:
            acc = np.zeros_like(a.data)
            np.add.at(acc, idx, g)
            _accum(a, acc)

    return _result(a.data[idx], (a,), backward)


# alias: an embedding lookup is a row gather on the table
embedding = take_rows


def take_at(a, ids) -> Tensor:
    """Pick one entry per row along the last axis of a 2-D tensor."""
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError("take_at expects a 2-D tensor")
    idx = np.asarray(ids, dtype=np.int64)
    rows = np.arange(a.data.shape[0])
    if idx.shape != (a.data.shape[0],):
        raise ShapeError("take_at: need one index per row")

    def backward(g):
        if a.requires_grad:
            acc = np.zeros_like(a.data)
            acc[rows, idx] = g
            _accum(a, acc)

    return _result(a.data[rows, idx], (a,), backward)


def tsum(a) -> Tensor:
    """Sum of all entries (scalar)."""
    a = _as_tensor(a)

    def backward(g):
        if a.requires_grad:
            _accum(a, np.broadcast_to(g, a.data.shape).copy())

    return _result(np.asarray(a.data.sum()), (a,), backward)


def tmean(a) -> Tensor:
    """Mean of all entries (scalar)."""
    a = _as_tensor(a)
    n = a.data.size

    def backward(g):
        if a.requires_grad:
            _accum(a, np.broadcast_to(g / n, a.data.shape).copy())

    return _result(np.asarray(a.data.mean()), (a,), backward)


# ---------------------------------------------------------------------------
# backward pass


def graph_nodes(root: Tensor) -> list[Tensor]:
    """Topological order of the graph reachable from ``root``.

    Iterative DFS (graphs can be thousands of nodes deep); every node with
    recorded history appears exactly once, parents before children.
    """
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(tensor) into ``.grad`` of every reachable tensor.

    The loss must be scalar. ``order`` puts parents before children, so the
    reversed walk sees every consumer of a node before the node itself and
    each ``_backward`` closure fires with a complete upstream gradient.
    Leaf gradients add onto any existing ``.grad``; call ``zero_grad`` on
    parameters between optimizer steps. Leaves the loss does not depend on
    keep ``grad is None``.
    """
    if loss.data.ndim != 0:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    order = graph_nodes(loss)
    _accum(loss, np.asarray(1.0))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(fn, point: Tensor, eps: float = 1e-5, coords=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` maps a Tensor to a scalar Tensor. ``coords`` optionally limits
    the check to a subset of flat coordinate indices (useful for large
    parameter tensors). Non-finite differences report as +inf rather than
    raising. Relative error is |analytic - numeric| / max(1, |analytic|).
    """
    if eps <= 0:
        raise ValueError("grad_check: eps must be positive")
    p = Tensor(point.data.copy(), requires_grad=True)
    loss = fn(p)
    backward(loss)
    analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()

    flat = p.data.reshape(-1)
    aflat = analytic.reshape(-1)
    if coords is None:
        coords = range(flat.size)
    worst = 0.0
    for i in coords:
        orig = flat[i]
        with no_grad():
            flat[i] = orig + eps
            up = float(fn(p).data)
            flat[i] = orig - eps
            down = float(fn(p).data)
            flat[i] = orig
        num = (up - down) / (2.0 * eps)
        if not np.isfinite(num):
            return float("inf")
        err = abs(aflat[i] - num) / max(1.0, abs(aflat[i]))
        worst = max(worst, err)
    return worst
