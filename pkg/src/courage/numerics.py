"""Dense float64 arrays with reverse-mode automatic differentiation.

The graph is rebuilt on every forward pass. Each op returns a new
:class:`Node` that remembers its parents and a closure that pushes the
output gradient back to them. Values are ordinary numpy arrays; a
two-dimensional array plays the role of a matrix, and a leading batch axis
is allowed everywhere (numpy broadcasting rules apply, and gradients are
summed back over broadcast axes).
"""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

Matrix = np.ndarray


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class NumericError(FloatingPointError):
    """A value or gradient became NaN or infinite."""


class GraphError(RuntimeError):
    """The computation graph was used out of contract."""


def _as_array(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    return arr


def _check_finite(value: np.ndarray, op: str) -> None:
    if not np.isfinite(value).all():
        raise NumericError(f"non-finite value produced by {op}")


class Node:
    """A value in the computation graph, plus its accumulated gradient."""

    __slots__ = ("value", "_grad", "parents", "op", "requires_grad", "_backward", "_consumed")

    def __init__(self, value, parents: Sequence["Node"] = (), op: str = "leaf",
                 requires_grad: bool | None = None):
        self.value = _as_array(value)
        _check_finite(self.value, op)
        self._grad: np.ndarray | None = None
        self.parents = tuple(parents)
        self.op = op
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self.parents)
        self.requires_grad = requires_grad
        self._backward: Callable[[], None] | None = None
        self._consumed = False

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            return np.zeros_like(self.value)
        return self._grad

    @grad.setter
    def grad(self, value: np.ndarray) -> None:
        self._grad = value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self._grad = None
        self._consumed = False

    def __repr__(self) -> str:
        return f"Node(op={self.op!r}, shape={self.shape})"

    # operator sugar for tests and small expressions
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(value) -> Node:
    return Node(value, requires_grad=False, op="constant")


def parameter(value) -> Node:
    return Node(np.array(value, dtype=np.float64, copy=True), requires_grad=True, op="parameter")


def _node(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` along axes numpy broadcast over."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _accumulate(node: Node, grad: np.ndarray) -> None:
    if node.requires_grad:
        grad = _unbroadcast(grad, node.shape)
        node._grad = grad if node._grad is None else node._grad + grad


def _result(value, parents: Sequence[Node], op: str) -> Node:
    return Node(value, parents, op)


# --------------------------------------------------------------------------
# ops
# --------------------------------------------------------------------------

def matmul(a, b) -> Node:
    a, b = _node(a), _node(b)
    if a.value.ndim < 2 or b.value.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    try:
        value = a.value @ b.value
    except ValueError as exc:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}") from exc
    out = _result(value, (a, b), "matmul")

    flat_b = b.value.ndim == 2 and a.value.ndim > 2

    def backward():
        g = out.grad
        if a.requires_grad:
            _accumulate(a, g @ np.swapaxes(b.value, -1, -2))
        if b.requires_grad:
            if flat_b:
                # batched rows times one weight matrix: a single 2-D product
                k = a.shape[-1]
                _accumulate(b, a.value.reshape(-1, k).T @ g.reshape(-1, g.shape[-1]))
            else:
                _accumulate(b, np.swapaxes(a.value, -1, -2) @ g)

    out._backward = backward
    return out


def add(a, b) -> Node:
    a, b = _node(a), _node(b)
    try:
        value = a.value + b.value
    except ValueError as exc:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from exc
    out = _result(value, (a, b), "add")

    def backward():
        _accumulate(a, out.grad)
        _accumulate(b, out.grad)

    out._backward = backward
    return out


def sub(a, b) -> Node:
    return add(a, scale(b, -1.0))


def mul(a, b) -> Node:
    """Elementwise product."""
    a, b = _node(a), _node(b)
    try:
        value = a.value * b.value
    except ValueError as exc:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from exc
    out = _result(value, (a, b), "mul")

    def backward():
        if a.requires_grad:
            _accumulate(a, out.grad * b.value)
        if b.requires_grad:
            _accumulate(b, out.grad * a.value)

    out._backward = backward
    return out


def scale(a, factor: float) -> Node:
    a = _node(a)
    factor = float(factor)
    out = _result(a.value * factor, (a,), "scale")

    def backward():
        _accumulate(a, out.grad * factor)

    out._backward = backward
    return out


def broadcast_add_bias(a, bias) -> Node:
    """Add a 1-D bias to every row of ``a``."""
    a, bias = _node(a), _node(bias)
    if bias.value.ndim != 1 or bias.shape[0] != a.shape[-1]:
        raise ShapeError(f"broadcast_add_bias: bias {bias.shape} does not fit rows of {a.shape}")
    out = add(a, bias)
    out.op = "broadcast_add_bias"
    return out


def transpose(a) -> Node:
    """Swap the last two axes."""
    a = _node(a)
    if a.value.ndim < 2:
        raise ShapeError(f"transpose: need at least 2 dims, got {a.shape}")
    return swapaxes(a, -1, -2)


def swapaxes(a, axis1: int, axis2: int) -> Node:
    a = _node(a)
    out = _result(np.swapaxes(a.value, axis1, axis2), (a,), "swapaxes")

    def backward():
        _accumulate(a, np.swapaxes(out.grad, axis1, axis2))

    out._backward = backward
    return out


def reshape(a, shape: tuple[int, ...]) -> Node:
    a = _node(a)
    try:
        value = a.value.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from exc
    out = _result(value, (a,), "reshape")

    def backward():
        _accumulate(a, out.grad.reshape(a.shape))

    out._backward = backward
    return out


def concat_cols(nodes: Sequence[Node]) -> Node:
    """Concatenate along the last axis."""
    nodes = [_node(n) for n in nodes]
    if not nodes:
        raise ShapeError("concat_cols: nothing to concatenate")
    lead = nodes[0].shape[:-1]
    for n in nodes[1:]:
        if n.shape[:-1] != lead:
            raise ShapeError(f"concat_cols: row shapes differ, {nodes[0].shape} vs {n.shape}")
    widths = [n.shape[-1] for n in nodes]
    out = _result(np.concatenate([n.value for n in nodes], axis=-1), nodes, "concat_cols")

    def backward():
        start = 0
        for n, w in zip(nodes, widths):
            _accumulate(n, out.grad[..., start:start + w])
            start += w

    out._backward = backward
    return out


def row_select(a, index: int) -> Node:
    """Pick one row (axis -2), dropping that axis."""
    a = _node(a)
    if a.value.ndim < 2:
        raise ShapeError(f"row_select: need at least 2 dims, got {a.shape}")
    n_rows = a.shape[-2]
    if not -n_rows <= index < n_rows:
        raise ShapeError(f"row_select: row {index} out of range for {a.shape}")
    out = _result(a.value[..., index, :], (a,), "row_select")

    def backward():
        g = np.zeros_like(a.value)
        g[..., index, :] = out.grad
        _accumulate(a, g)

    out._backward = backward
    return out


def mean_rows(a) -> Node:
    """Average over axis -2 (mean-pooling over positions)."""
    a = _node(a)
    n_rows = a.shape[-2]
    out = _result(a.value.mean(axis=-2), (a,), "mean_rows")

    def backward():
        _accumulate(a, np.repeat(np.expand_dims(out.grad, -2), n_rows, axis=-2) / n_rows)

    out._backward = backward
    return out


def relu(a) -> Node:
    a = _node(a)
    gate = a.value > 0
    out = _result(np.where(gate, a.value, 0.0), (a,), "relu")

    def backward():
        _accumulate(a, out.grad * gate)

    out._backward = backward
    return out


def softmax_rows(a) -> Node:
    """Softmax over the last axis, stabilised by subtracting each row's max."""
    a = _node(a)
    if a.value.size == 0:
        raise ShapeError("softmax_rows: empty input")
    shifted = a.value - a.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)
    out = _result(p, (a,), "softmax_rows")

    def backward():
        g = out.grad
        _accumulate(a, p * (g - (g * p).sum(axis=-1, keepdims=True)))

    out._backward = backward
    return out


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Node:
    """Normalise each row to zero mean / unit variance, then scale and shift."""
    a, gain, bias = _node(a), _node(gain), _node(bias)
    width = a.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise ShapeError(f"layer_norm: gain {gain.shape}/bias {bias.shape} vs rows of width {width}")
    mu = a.value.mean(axis=-1, keepdims=True)
    centred = a.value - mu
    var = (centred * centred).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centred * inv_std
    out = _result(xhat * gain.value + bias.value, (a, gain, bias), "layer_norm")

    def backward():
        g = out.grad
        if gain.requires_grad:
            _accumulate(gain, g * xhat)
        if bias.requires_grad:
            _accumulate(bias, g)
        if a.requires_grad:
            gx = g * gain.value
            _accumulate(a, inv_std * (gx - gx.mean(axis=-1, keepdims=True)
                                      - xhat * (gx * xhat).mean(axis=-1, keepdims=True)))

    out._backward = backward
    return out


def sum_all(a) -> Node:
    a = _node(a)
    out = _result(np.array([[a.value.sum()]]), (a,), "sum_all")

    def backward():
        _accumulate(a, np.broadcast_to(out.grad[0, 0], a.shape))

    out._backward = backward
    return out


def mean_all(a) -> Node:
    a = _node(a)
    return scale(sum_all(a), 1.0 / a.value.size)


def huber_mean(pred, target, delta: float = 1.0) -> Node:
    """Mean Huber loss over every entry of ``pred`` against ``target``."""
    pred, target = _node(pred), _node(target)
    if pred.shape != target.shape:
        raise ShapeError(f"huber_mean: prediction {pred.shape} vs target {target.shape}")
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    r = pred.value - target.value
    small = np.abs(r) <= delta
    z = np.where(small, 0.5 * r * r, delta * (np.abs(r) - 0.5 * delta))
    n = r.size
    out = _result(np.array([[z.sum() / n]]), (pred, target), "huber_mean")

    def backward():
        dz = np.where(small, r, delta * np.sign(r)) * (out.grad[0, 0] / n)
        _accumulate(pred, dz)
        _accumulate(target, -dz)

    out._backward = backward
    return out


# --------------------------------------------------------------------------
# backward pass
# --------------------------------------------------------------------------

def _topological_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Node) -> dict[Node, np.ndarray]:
    """Propagate d(loss)/d(node) to every node that requires a gradient.

    Returns a map from each leaf that requires a gradient to its gradient.
    Calling this twice on the same graph without :meth:`Node.zero_grad` on
    the loss raises :class:`GraphError`.
    """
    if loss.value.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise GraphError("backward already ran on this graph; rebuild it or reset gradients")
    order = _topological_order(loss)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._backward is not None:
            node._backward()
    loss._consumed = True
    grads = {}
    for node in order:
        if not node.parents and node.requires_grad:
            _check_finite(node.grad, "backward")
            grads[node] = node.grad
    return grads


def gradient_check(f: Callable[[Mapping[str, Node]], Node],
                   params: Mapping[str, np.ndarray],
                   epsilon: float = 1e-5) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    ``f`` maps a dict of parameter nodes to a scalar node. The relative error
    of each entry is ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    arrays = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    leaves = {k: parameter(v) for k, v in arrays.items()}
    loss = f(leaves)
    if not np.isfinite(loss.value).all():
        raise NumericError("loss is not finite")
    backward(loss)

    def evaluate() -> float:
        value = f({k: constant(v) for k, v in arrays.items()}).value
        if not np.isfinite(value).all():
            raise NumericError("loss is not finite")
        return float(value.reshape(-1)[0])

    worst = 0.0
    for name, arr in arrays.items():
        analytic = leaves[name].grad
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = evaluate()
            flat[i] = orig - epsilon
            down = evaluate()
            flat[i] = orig
            numeric = (up - down) / (2.0 * epsilon)
            err = abs(analytic.reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst

