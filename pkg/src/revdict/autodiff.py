"""Reverse-mode automatic differentiation over dense float64 arrays.

Ops evaluate eagerly: creating a node computes its value immediately and
records a closure that pushes gradients to its parents. Node creation order
is therefore already a topological order, and ``Graph.backward`` walks it in
exact reverse. Everything is float64 and single-threaded so that gradient
checks are tight and repeated runs are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

Array = np.ndarray

GRAD_CHECK_FLOOR = 1e-8  # denominator floor for relative errors


class ShapeError(ValueError):
    """Operand shapes do not conform."""


def _as_f64(x) -> Array:
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64))


def _stable_sigmoid(x: Array) -> Array:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Node:
    """One vertex of a computation graph: cached value plus cached gradient."""

    __slots__ = ("graph", "nid", "op", "parents", "value", "grad", "requires_grad", "_push")

    def __init__(self, graph: "Graph", nid: int, op: str, parents: tuple["Node", ...],
                 value: Array, requires_grad: bool,
                 push: Callable[[Array], None] | None):
        self.graph = graph
        self.nid = nid
        self.op = op
        self.parents = parents
        self.value = value
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self._push = push

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:  # pragma: no cover
        return f"Node({self.nid}, {self.op}, shape={self.value.shape})"


class Graph:
    """Computation graph whose node list doubles as the topological order."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.params: dict[str, Node] = {}

    def _add(self, op: str, parents: tuple[Node, ...], value: Array,
             push: Callable[[Array], None] | None = None,
             requires_grad: bool | None = None) -> Node:
        for p in parents:
            assert p.graph is self, "node belongs to a different graph"
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in parents)
        node = Node(self, len(self.nodes), op, parents, value, requires_grad, push)
        self.nodes.append(node)
        return node

    def parameter(self, name: str, array) -> Node:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        node = self._add("parameter", (), _as_f64(array), requires_grad=True)
        self.params[name] = node
        return node

    def constant(self, array) -> Node:
        return self._add("constant", (), _as_f64(array), requires_grad=False)

    def backward(self, loss: Node) -> None:
        """Propagate d(loss)/d(node) to every ancestor of ``loss``."""
        if loss.graph is not self:
            raise ValueError("loss node belongs to a different graph")
        if loss.value.shape != ():
            raise ShapeError(f"loss must be scalar, got shape {loss.value.shape}")
        loss.grad = np.ones((), dtype=np.float64)
        for node in reversed(self.nodes[: loss.nid + 1]):
            if node.grad is None or node._push is None:
                continue
            node._push(node.grad)

    def parameter_gradients(self) -> dict[str, Array]:
        """Gradient per registered parameter; zeros for leaves the loss never saw."""
        out = {}
        for name, node in self.params.items():
            out[name] = node.grad if node.grad is not None else np.zeros_like(node.value)
        return out


def _accum(node: Node, grad: Array) -> None:
    if not node.requires_grad:
        return
    if node.grad is None:
        node.grad = np.zeros_like(node.value)
    node.grad += grad


# ---------------------------------------------------------------------------
# elementwise / linear ops


def add(a: Node, b: Node) -> Node:
    value = a.value + b.value

    def push(g: Array) -> None:
        _accum(a, _unbroadcast(g, a.value.shape))
        _accum(b, _unbroadcast(g, b.value.shape))

    return a.graph._add("add", (a, b), value, push)


def mul(a: Node, b: Node) -> Node:
    value = a.value * b.value

    def push(g: Array) -> None:
        _accum(a, _unbroadcast(g * b.value, a.value.shape))
        _accum(b, _unbroadcast(g * a.value, b.value.shape))

    return a.graph._add("mul", (a, b), value, push)


def scale(a: Node, k: float) -> Node:
    """Multiply by a python float (hyperparameter, not differentiated)."""
    value = a.value * k

    def push(g: Array) -> None:
        _accum(a, g * k)

    return a.graph._add("scale", (a,), value, push)


def matmul(a: Node, b: Node) -> Node:
    """``a @ b`` with a of rank 1 or 2 and b of rank 2."""
    if b.value.ndim != 2 or a.value.ndim not in (1, 2):
        raise ShapeError(f"matmul expects (n,)|(B,n) @ (n,p), got {a.shape} @ {b.shape}")
    if a.value.shape[-1] != b.value.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    value = a.value @ b.value

    def push(g: Array) -> None:
        _accum(a, g @ b.value.T)
        a2 = a.value.reshape(-1, a.value.shape[-1])
        g2 = g.reshape(-1, b.value.shape[1])
        _accum(b, a2.T @ g2)

    return a.graph._add("matmul", (a, b), value, push)


def affine(w: Node, x: Node, b: Node) -> Node:
    """``x @ w.T + b`` with w of shape (m, n), x of shape (..., n), b of shape (m,)."""
    if w.value.ndim != 2 or b.value.ndim != 1:
        raise ShapeError(f"affine expects 2-d weight and 1-d bias, got {w.shape} and {b.shape}")
    m, n = w.value.shape
    if x.value.ndim < 1 or x.value.shape[-1] != n or b.value.shape[0] != m:
        raise ShapeError(f"affine shapes do not conform: w {w.shape}, x {x.shape}, b {b.shape}")
    value = x.value @ w.value.T + b.value

    def push(g: Array) -> None:
        _accum(x, g @ w.value)
        g2 = g.reshape(-1, m)
        x2 = x.value.reshape(-1, n)
        _accum(w, g2.T @ x2)
        _accum(b, g2.sum(axis=0))

    return w.graph._add("affine", (w, x, b), value, push)


def sigmoid(x: Node) -> Node:
    s = _stable_sigmoid(x.value)

    def push(g: Array) -> None:
        _accum(x, g * s * (1.0 - s))

    return x.graph._add("sigmoid", (x,), s, push)


def tanh(x: Node) -> Node:
    t = np.tanh(x.value)

    def push(g: Array) -> None:
        _accum(x, g * (1.0 - t * t))

    return x.graph._add("tanh", (x,), t, push)


def concat(parts: Sequence[Node], axis: int = -1) -> Node:
    value = np.concatenate([p.value for p in parts], axis=axis)
    sizes = [p.value.shape[axis] for p in parts]

    def push(g: Array) -> None:
        offset = 0
        for p, size in zip(parts, sizes):
            index = [slice(None)] * g.ndim
            index[axis if axis >= 0 else g.ndim + axis] = slice(offset, offset + size)
            _accum(p, g[tuple(index)])
            offset += size

    return parts[0].graph._add("concat", tuple(parts), value, push)


def stack(parts: Sequence[Node], axis: int = 1) -> Node:
    value = np.stack([p.value for p in parts], axis=axis)

    def push(g: Array) -> None:
        slices = np.moveaxis(g, axis, 0)
        for p, gs in zip(parts, slices):
            _accum(p, gs)

    return parts[0].graph._add("stack", tuple(parts), value, push)


def time_slice(x: Node, t: int) -> Node:
    """Select step ``t`` along axis 1: (B, T, ...) -> (B, ...)."""
    value = np.ascontiguousarray(x.value[:, t])

    def push(g: Array) -> None:
        z = np.zeros_like(x.value)
        z[:, t] = g
        _accum(x, z)

    return x.graph._add("time_slice", (x,), value, push)


def apply_mask(x: Node, mask: Array) -> Node:
    """Multiply by a constant 0/1 mask (broadcast over trailing dims)."""
    m = np.asarray(mask, dtype=np.float64)
    value = x.value * m

    def push(g: Array) -> None:
        _accum(x, g * m)

    return x.graph._add("apply_mask", (x,), value, push)


def dropout(x: Node, rate: float, rng: np.random.Generator) -> Node:
    """Inverted dropout; draws one mask per call from ``rng``."""
    if not 0.0 < rate < 1.0:
        raise ValueError(f"dropout rate must lie in (0, 1), got {rate}")
    keep = (rng.random(x.value.shape) >= rate) / (1.0 - rate)
    value = x.value * keep

    def push(g: Array) -> None:
        _accum(x, g * keep)

    return x.graph._add("dropout", (x,), value, push)


# ---------------------------------------------------------------------------
# reductions and pooling


def sum_all(x: Node) -> Node:
    value = np.asarray(x.value.sum())

    def push(g: Array) -> None:
        _accum(x, np.full_like(x.value, float(g)))

    return x.graph._add("sum_all", (x,), value, push)


def mean_all(x: Node) -> Node:
    size = x.value.size
    value = np.asarray(x.value.sum() / size)

    def push(g: Array) -> None:
        _accum(x, np.full_like(x.value, float(g) / size))

    return x.graph._add("mean_all", (x,), value, push)


def masked_max_pool(rows: Node, mask: Array) -> tuple[Node, Array]:
    """Componentwise max over unmasked rows.

    ``rows`` has shape (..., T, k) and ``mask`` shape (..., T) with entries in
    {0, 1}. Returns the pooled node of shape (..., k) and the selected row
    index per component; ties go to the lowest index, and the subgradient is
    routed to the selected index only.
    """
    m = np.asarray(mask, dtype=np.float64)
    if m.shape != rows.value.shape[:-1]:
        raise ShapeError(f"mask shape {m.shape} does not match rows {rows.shape}")
    if np.any(m.sum(axis=-1) < 1):
        raise ValueError("masked_max_pool: all positions masked")
    guarded = np.where(m[..., None] > 0, rows.value, -np.inf)
    pooled = guarded.max(axis=-2)
    argmax = guarded.argmax(axis=-2)

    def push(g: Array) -> None:
        z = np.zeros_like(rows.value)
        np.put_along_axis(z, np.expand_dims(argmax, -2), np.expand_dims(g, -2), axis=-2)
        _accum(rows, z)

    node = rows.graph._add("masked_max_pool", (rows,), pooled, push)
    return node, argmax


def dot_rows(h: Node, q: Node) -> Node:
    """Per-row dot products: (..., T, k) x (..., k) -> (..., T)."""
    value = (h.value * q.value[..., None, :]).sum(axis=-1)

    def push(g: Array) -> None:
        _accum(h, g[..., None] * q.value[..., None, :])
        _accum(q, (g[..., None] * h.value).sum(axis=-2))

    return h.graph._add("dot_rows", (h, q), value, push)


def weighted_sum(alpha: Node, h: Node) -> Node:
    """Weighted sum of rows: (..., T) x (..., T, k) -> (..., k)."""
    value = (alpha.value[..., None] * h.value).sum(axis=-2)

    def push(g: Array) -> None:
        _accum(alpha, (g[..., None, :] * h.value).sum(axis=-1))
        _accum(h, alpha.value[..., None] * g[..., None, :])

    return alpha.graph._add("weighted_sum", (alpha, h), value, push)


def masked_softmax(x: Node, mask: Array) -> Node:
    """Softmax over the last axis restricted to unmasked entries (masked -> 0)."""
    m = np.asarray(mask, dtype=np.float64)
    guarded = np.where(m > 0, x.value, -np.inf)
    zmax = guarded.max(axis=-1, keepdims=True)
    e = np.where(m > 0, np.exp(x.value - zmax), 0.0)
    out = e / e.sum(axis=-1, keepdims=True)

    def push(g: Array) -> None:
        inner = (g * out).sum(axis=-1, keepdims=True)
        _accum(x, out * (g - inner))

    return x.graph._add("masked_softmax", (x,), out, push)


# ---------------------------------------------------------------------------
# losses


def softmax_cross_entropy(logits: Node, target) -> Node:
    """Negative log softmax probability of the target class.

    1-d logits with an int target give a scalar; (B, n) logits with a length-B
    index array give a (B,) vector of losses. Max subtraction keeps the
    computation stable for large logits.
    """
    v = logits.value
    n = v.shape[-1]
    idx = np.asarray(target)
    if np.any(idx < 0) or np.any(idx >= n):
        raise IndexError(f"target {target} out of range for {n} classes")
    z = v - v.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    lse = np.log(ez.sum(axis=-1))
    if v.ndim == 1:
        value = np.asarray(lse - z[int(idx)])
    else:
        value = lse - z[np.arange(v.shape[0]), idx]
    p = ez / ez.sum(axis=-1, keepdims=True)

    def push(g: Array) -> None:
        d = p.copy()
        if v.ndim == 1:
            d[int(idx)] -= 1.0
            _accum(logits, g * d)
        else:
            d[np.arange(v.shape[0]), idx] -= 1.0
            _accum(logits, g[..., None] * d)

    return logits.graph._add("softmax_cross_entropy", (logits,), value, push)


def sigmoid_cross_entropy_sum(logits: Node, target) -> Node:
    """Sum over classes of binary cross-entropy against a one-hot target.

    Shapes mirror ``softmax_cross_entropy``. Uses the log1p formulation so no
    intermediate sigmoid saturates.
    """
    v = logits.value
    n = v.shape[-1]
    idx = np.asarray(target)
    if np.any(idx < 0) or np.any(idx >= n):
        raise IndexError(f"target {target} out of range for {n} classes")
    y = np.zeros_like(v)
    if v.ndim == 1:
        y[int(idx)] = 1.0
    else:
        y[np.arange(v.shape[0]), idx] = 1.0
    per = np.maximum(v, 0.0) - v * y + np.log1p(np.exp(-np.abs(v)))
    value = np.asarray(per.sum(axis=-1))
    s = _stable_sigmoid(v)

    def push(g: Array) -> None:
        d = s - y
        if v.ndim == 1:
            _accum(logits, g * d)
        else:
            _accum(logits, g[..., None] * d)

    return logits.graph._add("sigmoid_cross_entropy_sum", (logits,), value, push)


# ---------------------------------------------------------------------------
# LSTM step


@dataclass(frozen=True)
class LstmGates:
    """Weight nodes for one LSTM direction; each maps [x; h_prev] to l dims."""

    w_input: Node
    w_forget: Node
    w_output: Node
    w_candidate: Node
    b_input: Node
    b_forget: Node
    b_output: Node
    b_candidate: Node

    @classmethod
    def from_params(cls, params: Mapping[str, Node], prefix: str) -> "LstmGates":
        return cls(
            w_input=params[f"{prefix}.w_input"],
            w_forget=params[f"{prefix}.w_forget"],
            w_output=params[f"{prefix}.w_output"],
            w_candidate=params[f"{prefix}.w_candidate"],
            b_input=params[f"{prefix}.b_input"],
            b_forget=params[f"{prefix}.b_forget"],
            b_output=params[f"{prefix}.b_output"],
            b_candidate=params[f"{prefix}.b_candidate"],
        )


def lstm_step(gates: LstmGates, x_t: Node, h_prev: Node, c_prev: Node) -> tuple[Node, Node]:
    """Standard LSTM recurrence with sigmoid gates and tanh squashing."""
    xh = concat([x_t, h_prev], axis=-1)
    i = sigmoid(affine(gates.w_input, xh, gates.b_input))
    f = sigmoid(affine(gates.w_forget, xh, gates.b_forget))
    o = sigmoid(affine(gates.w_output, xh, gates.b_output))
    cand = tanh(affine(gates.w_candidate, xh, gates.b_candidate))
    c_t = add(mul(f, c_prev), mul(i, cand))
    h_t = mul(o, tanh(c_t))
    return h_t, c_t


# ---------------------------------------------------------------------------
# verification


def gradient_check(f: Callable[[dict[str, Array]], Node],
                   params: dict[str, Array],
                   epsilon: float = 1e-5) -> float:
    """Worst relative error between backward and central finite differences.

    ``f`` must build a fresh graph from the current parameter arrays and
    return the scalar loss node; it must be deterministic (dropout off). The
    arrays in ``params`` are perturbed in place and restored. The relative
    error denominator is max(|analytic|, |numeric|, 1e-8).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    loss = f(params)
    loss.graph.backward(loss)
    analytic = loss.graph.parameter_gradients()
    worst = 0.0
    for name in sorted(params):
        flat = params[name].reshape(-1)
        ana = analytic[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            f_plus = float(f(params).value)
            flat[j] = orig - epsilon
            f_minus = float(f(params).value)
            flat[j] = orig
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            denom = max(abs(float(ana[j])), abs(numeric), GRAD_CHECK_FLOOR)
            worst = max(worst, abs(float(ana[j]) - numeric) / denom)
    return worst
