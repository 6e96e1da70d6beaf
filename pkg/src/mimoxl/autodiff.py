"""Minimal dense reverse-mode differentiation on a recording tape.

Every operation appends a node to a :class:`Tape`; creation order is a
topological order, so ``backward`` is a single reverse sweep.  Values are
float64 numpy arrays throughout.  The one non-standard node is
:func:`substitute`, which emits one array in the forward pass but routes the
incoming gradient to a different (differentiable) input in the backward
pass; the selection network is built on it.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """One tape node: a value, its inputs and a gradient accumulator."""

    __slots__ = ("tape", "value", "op", "inputs", "aux", "requires_grad", "grad")

    def __init__(self, tape, value, op=None, inputs=(), aux=None, requires_grad=True):
        self.tape = tape
        self.value = np.asarray(value, dtype=float)
        self.op = op
        self.inputs = inputs
        self.aux = aux
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return hadamard(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.value.shape})"


class Tape:
    """Recording tape; one per forward/backward pass."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def _record(self, node: Tensor) -> Tensor:
        self.nodes.append(node)
        return node

    def leaf(self, value, requires_grad: bool = True) -> Tensor:
        return self._record(Tensor(self, value, requires_grad=requires_grad))

    def constant(self, value) -> Tensor:
        return self.leaf(value, requires_grad=False)


def _node(op, inputs, value, aux=None) -> Tensor:
    tape = inputs[0].tape
    for t in inputs[1:]:
        if t.tape is not tape:
            raise ValueError("all operands must live on the same tape")
    return tape._record(Tensor(tape, value, op=op, inputs=tuple(inputs), aux=aux))


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.value.shape != b.value.shape:
        raise ValueError(f"{op}: shape mismatch {a.value.shape} vs {b.value.shape}")


# ---------------------------------------------------------------------------
# forward ops


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _node("add", (a, b), a.value + b.value)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _node("sub", (a, b), a.value - b.value)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "hadamard")
    return _node("hadamard", (a, b), a.value * b.value)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim not in (1, 2):
        raise ValueError("matmul expects a matrix times a vector or matrix")
    if a.value.shape[1] != b.value.shape[0]:
        raise ValueError(f"matmul: inner dimensions differ, {a.value.shape} @ {b.value.shape}")
    return _node("matmul", (a, b), a.value @ b.value)


def mul_colvec(x: Tensor, v: Tensor) -> Tensor:
    """Scale every column of matrix x by vector v (the batched Hadamard mask)."""
    if x.value.ndim != 2 or v.value.ndim != 1 or x.value.shape[0] != v.value.shape[0]:
        raise ValueError("mul_colvec expects (m,n) matrix and length-m vector")
    return _node("mul_colvec", (x, v), x.value * v.value[:, None])


def add_colvec(x: Tensor, v: Tensor) -> Tensor:
    """Add vector v to every column of matrix x (bias over a batch)."""
    if x.value.ndim != 2 or v.value.ndim != 1 or x.value.shape[0] != v.value.shape[0]:
        raise ValueError("add_colvec expects (m,n) matrix and length-m vector")
    return _node("add_colvec", (x, v), x.value + v.value[:, None])


def relu(x: Tensor) -> Tensor:
    return _node("relu", (x,), np.maximum(x.value, 0.0))


def softmax(x: Tensor) -> Tensor:
    """Stable softmax of a vector (max-subtraction)."""
    if x.value.ndim != 1:
        raise ValueError("softmax is defined on vectors")
    z = x.value - np.max(x.value)
    e = np.exp(z)
    return _node("softmax", (x,), e / np.sum(e))


def log(x: Tensor) -> Tensor:
    if np.any(x.value <= 0):
        raise ValueError("log requires strictly positive inputs")
    return _node("log", (x,), np.log(x.value))


def scale(x: Tensor, c: float) -> Tensor:
    return _node("scale", (x,), x.value * c, aux=float(c))


def mul_scalar(x: Tensor, s: Tensor) -> Tensor:
    """Multiply by a trainable scalar node (0-d tensor)."""
    if s.value.ndim != 0:
        raise ValueError("mul_scalar expects a 0-d scalar node")
    return _node("mul_scalar", (x, s), x.value * s.value)


def pick(v: Tensor, i: int) -> Tensor:
    """Extract entry i of a vector as a 0-d node."""
    if v.value.ndim != 1:
        raise ValueError("pick expects a vector")
    return _node("pick", (v,), np.asarray(v.value[i]), aux=int(i))


def tsum(x: Tensor) -> Tensor:
    return _node("sum", (x,), np.sum(x.value))


def square(x: Tensor) -> Tensor:
    return _node("square", (x,), x.value**2)


def cube(x: Tensor) -> Tensor:
    return _node("cube", (x,), x.value**3)


def mse(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mse")
    d = a.value - b.value
    return _node("mse", (a, b), np.mean(d**2))


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy; logits are (n_classes, batch)."""
    if logits.value.ndim != 2:
        raise ValueError("cross_entropy expects (n_classes, batch) logits")
    labels = np.asarray(labels, dtype=int)
    z = logits.value - np.max(logits.value, axis=0, keepdims=True)
    e = np.exp(z)
    p = e / np.sum(e, axis=0, keepdims=True)
    b = labels.shape[0]
    nll = -np.mean(np.log(p[labels, np.arange(b)]))
    return _node("cross_entropy", (logits,), nll, aux=(p, labels))


def tile2(x: Tensor) -> Tensor:
    """Duplicate a vector, [x; x]; used to cover real and imaginary halves."""
    if x.value.ndim != 1:
        raise ValueError("tile2 expects a vector")
    return _node("tile2", (x,), np.concatenate([x.value, x.value]))


def outer_self(v: Tensor) -> Tensor:
    """Flattened outer product v v^T as a length n*n vector."""
    if v.value.ndim != 1:
        raise ValueError("outer_self expects a vector")
    return _node("outer_self", (v,), np.outer(v.value, v.value).ravel())


def hermitian_packed(x: Tensor, n: int) -> Tensor:
    """Map packed [Re; Im] of an n x n matrix M to the packing of M + M^H.

    The real half becomes Re + Re^T and the imaginary half Im - Im^T, making
    the represented complex matrix exactly Hermitian.
    """
    if x.value.ndim == 1:
        if x.value.shape[0] != 2 * n * n:
            raise ValueError("hermitian_packed expects a packed 2*n*n vector")
        re = x.value[: n * n].reshape(n, n)
        im = x.value[n * n :].reshape(n, n)
        out = np.concatenate([(re + re.T).ravel(), (im - im.T).ravel()])
    elif x.value.ndim == 2:
        if x.value.shape[0] != 2 * n * n:
            raise ValueError("hermitian_packed expects packed 2*n*n rows")
        cols = x.value.shape[1]
        re = x.value[: n * n].reshape(n, n, cols)
        im = x.value[n * n :].reshape(n, n, cols)
        re_s = re + np.transpose(re, (1, 0, 2))
        im_s = im - np.transpose(im, (1, 0, 2))
        out = np.concatenate([re_s.reshape(n * n, cols), im_s.reshape(n * n, cols)])
    else:
        raise ValueError("hermitian_packed expects a vector or matrix")
    return _node("hermitian_packed", (x,), out, aux=n)


def substitute(soft: Tensor, hard: np.ndarray) -> Tensor:
    """Emit ``hard`` in the forward pass, differentiate as the identity of ``soft``.

    No gradient flows through the non-differentiable construction of
    ``hard``; the incoming gradient is handed to ``soft`` unchanged.
    """
    hard = np.asarray(hard, dtype=float)
    if hard.shape != soft.value.shape:
        raise ValueError("hard and soft selections must have equal shapes")
    return _node("substitute", (soft,), hard)


# ---------------------------------------------------------------------------
# backward rules


def _backward_node(node: Tensor, g: np.ndarray):
    op = node.op
    a = node.inputs[0] if node.inputs else None
    if op == "add":
        return g, g
    if op == "sub":
        return g, -g
    if op == "hadamard":
        return g * node.inputs[1].value, g * a.value
    if op == "matmul":
        b = node.inputs[1]
        if b.value.ndim == 1:
            return np.outer(g, b.value), a.value.T @ g
        return g @ b.value.T, a.value.T @ g
    if op == "mul_colvec":
        x, v = node.inputs
        return g * v.value[:, None], np.sum(g * x.value, axis=1)
    if op == "add_colvec":
        return g, np.sum(g, axis=1)
    if op == "relu":
        return (g * (a.value > 0.0),)
    if op == "softmax":
        y = node.value
        return (y * (g - np.dot(g, y)),)
    if op == "log":
        return (g / a.value,)
    if op == "scale":
        return (g * node.aux,)
    if op == "mul_scalar":
        s = node.inputs[1]
        return g * s.value, np.asarray(np.sum(g * a.value))
    if op == "pick":
        out = np.zeros_like(a.value)
        out[node.aux] = g
        return (out,)
    if op == "sum":
        return (np.broadcast_to(g, a.value.shape).copy(),)
    if op == "square":
        return (2.0 * a.value * g,)
    if op == "cube":
        return (3.0 * a.value**2 * g,)
    if op == "mse":
        b = node.inputs[1]
        d = (2.0 / a.value.size) * (a.value - b.value) * g
        return d, -d
    if op == "cross_entropy":
        p, labels = node.aux
        grad = p.copy()
        grad[labels, np.arange(labels.shape[0])] -= 1.0
        return (grad * (g / labels.shape[0]),)
    if op == "tile2":
        n = a.value.shape[0]
        return (g[:n] + g[n:],)
    if op == "outer_self":
        n = a.value.shape[0]
        G = g.reshape(n, n)
        return (G @ a.value + G.T @ a.value,)
    if op == "hermitian_packed":
        n = node.aux
        if g.ndim == 1:
            gre = g[: n * n].reshape(n, n)
            gim = g[n * n :].reshape(n, n)
            return (np.concatenate([(gre + gre.T).ravel(), (gim - gim.T).ravel()]),)
        cols = g.shape[1]
        gre = g[: n * n].reshape(n, n, cols)
        gim = g[n * n :].reshape(n, n, cols)
        out = np.concatenate(
            [
                (gre + np.transpose(gre, (1, 0, 2))).reshape(n * n, cols),
                (gim - np.transpose(gim, (1, 0, 2))).reshape(n * n, cols),
            ]
        )
        return (out,)
    if op == "substitute":
        return (g,)
    raise NotImplementedError(f"no backward rule for op {op!r}")


def backward(loss: Tensor):
    """Populate ``grad`` on every node reachable from ``loss``.

    The loss must be scalar; its own gradient is seeded with 1.
    """
    if loss.value.ndim != 0:
        raise ValueError("backward starts from a scalar loss")
    tape = loss.tape
    for node in tape.nodes:
        node.grad = None
    loss.grad = np.ones(())
    for node in reversed(tape.nodes):
        if node.grad is None or node.op is None:
            continue
        grads = _backward_node(node, node.grad)
        for inp, g in zip(node.inputs, grads):
            if not inp.requires_grad and inp.op is None:
                continue
            if inp.grad is None:
                inp.grad = np.zeros_like(inp.value)
            inp.grad = inp.grad + g


# ---------------------------------------------------------------------------
# finite-difference verification


def grad_check(fn, point, epsilon: float = 1e-6) -> float:
    """Max mismatch between tape gradients and central finite differences.

    ``fn(*arrays)`` must rebuild the graph from scratch and return
    ``(loss_tensor, parameter_leaves)`` with one leaf per input array;
    constants belong in the closure, not in ``point``.  The reported error
    per coordinate is |analytic - numeric| / max(1, |analytic|); the
    maximum over all coordinates of all parameters comes back.
    """
    if not (0.0 < epsilon <= 1e-3):
        raise ValueError("epsilon must lie in (0, 1e-3]")
    point = [np.asarray(p, dtype=float) for p in point]
    loss, leaves = fn(*point)
    if len(leaves) != len(point):
        raise ValueError("fn must return one parameter leaf per input array")
    if not np.isfinite(loss.value):
        raise ValueError("loss is not finite at the evaluation point")
    backward(loss)
    analytic = [np.zeros_like(p) if leaf.grad is None else leaf.grad.copy() for p, leaf in zip(point, leaves)]

    worst = 0.0
    for k, p in enumerate(point):
        flat = p.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up, _ = fn(*point)
            flat[i] = orig - epsilon
            dn, _ = fn(*point)
            flat[i] = orig
            if not (np.isfinite(up.value) and np.isfinite(dn.value)):
                raise ValueError("loss is not finite near the evaluation point")
            numeric = (float(up.value) - float(dn.value)) / (2.0 * epsilon)
            ana = analytic[k].ravel()[i]
            err = abs(ana - numeric) / max(1.0, abs(ana))
            worst = max(worst, err)
    return worst
