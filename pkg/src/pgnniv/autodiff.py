"""Reverse-mode automatic differentiation over dense float64 matrices.

Every value is a 2-D ``numpy`` array. A :class:`Tape` records nodes in
creation order, which is a valid topological order, so the backward pass is a
single reverse sweep.

Example::

    tape = Tape()
    w = tape.param(Param("w", [[3.0]]))
    loss = square(w)
    grads = backward(tape, sum_(loss))   # {"w": [[6.0]]}
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractError, DomainError, ShapeError

__all__ = [
    "Param", "Node", "Tape",
    "matmul", "add", "sub", "mul", "neg", "scale", "pow_scalar", "signed_pow",
    "square", "relu", "sum_", "mean", "columns", "concat",
    "backward", "sgd_step", "glorot_uniform",
]


def _as_matrix(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim > 2:
        raise ShapeError(f"expected at most 2 dimensions, got shape {arr.shape}")
    return arr


class Param:
    """A named trainable matrix whose shape is fixed at creation."""

    def __init__(self, id: str, value):
        self.id = id
        self._value = _as_matrix(value).copy()
        self.shape: tuple[int, int] = self._value.shape

    @property
    def value(self) -> np.ndarray:
        return self._value

    @value.setter
    def value(self, new) -> None:
        arr = _as_matrix(new)
        if arr.shape != self.shape:
            raise ShapeError(f"param {self.id!r} has shape {self.shape}, cannot assign {arr.shape}")
        self._value = arr.copy()

    def __repr__(self) -> str:
        return f"Param({self.id!r}, shape={self.shape})"


class Node:
    __slots__ = ("tape", "index", "op", "parents", "value", "grad", "backward_fn", "param")

    def __init__(self, tape, index, op, parents, value, backward_fn=None, param=None):
        self.tape = tape
        self.index = index
        self.op = op
        self.parents = parents
        self.value = value
        self.grad = None
        self.backward_fn = backward_fn
        self.param = param

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

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

    def __repr__(self) -> str:
        return f"Node({self.op}, shape={self.shape})"


class Tape:
    """Append-only record of the operations of one forward pass.

    Not thread-safe; use one tape per thread.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._leaves: dict[str, Node] = {}

    def _push(self, op: str, parents: tuple, value: np.ndarray,
              backward_fn: Callable | None = None, param: Param | None = None) -> Node:
        node = Node(self, len(self.nodes), op, parents, value, backward_fn, param)
        self.nodes.append(node)
        return node

    def param(self, p: Param) -> Node:
        """Leaf node bound to ``p``; repeated calls return the same node."""
        node = self._leaves.get(p.id)
        if node is None:
            node = self._push("param", (), p.value, param=p)
            self._leaves[p.id] = node
        elif node.param is not p:
            raise ContractError(f"two distinct params share the id {p.id!r}")
        return node

    def const(self, value) -> Node:
        return self._push("const", (), _as_matrix(value))

    @property
    def params(self) -> list[Param]:
        return [n.param for n in self._leaves.values()]

    def zero_grad(self) -> None:
        for node in self.nodes:
            node.grad = None


def _lift(tape: Tape, x) -> Node:
    if isinstance(x, Node):
        return x
    return tape.const(x)


def _binary_tape(a, b) -> Tape:
    for x in (a, b):
        if isinstance(x, Node):
            return x.tape
    raise ContractError("at least one operand must be a Node")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    for axis in (0, 1):
        if shape[axis] == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Node, b: Node) -> tuple[int, int]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def matmul(a: Node, b: Node) -> Node:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ for shapes {a.shape} and {b.shape}")
    av, bv = a.value, b.value

    def back(g):
        return g @ bv.T, av.T @ g

    return a.tape._push("matmul", (a, b), av @ bv, back)


def add(a, b) -> Node:
    tape = _binary_tape(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape

    def back(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return tape._push("add", (a, b), a.value + b.value, back)


def sub(a, b) -> Node:
    tape = _binary_tape(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape

    def back(g):
        return _unbroadcast(g, sa), -_unbroadcast(g, sb)

    return tape._push("sub", (a, b), a.value - b.value, back)


def mul(a, b) -> Node:
    tape = _binary_tape(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _broadcast_shape("mul", a, b)
    av, bv = a.value, b.value

    def back(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return tape._push("mul", (a, b), av * bv, back)


def neg(a: Node) -> Node:
    return a.tape._push("neg", (a,), -a.value, lambda g: (-g,))


def scale(a: Node, c: float) -> Node:
    """Multiply by a constant scalar that is not part of the graph."""
    c = float(c)
    return a.tape._push("scale", (a,), a.value * c, lambda g: (g * c,))


def pow_scalar(a: Node, p: float) -> Node:
    """Elementwise ``a**p``; fractional ``p`` needs a strictly positive base."""
    p = float(p)
    av = a.value
    if not float(p).is_integer() and np.any(av <= 0):
        raise DomainError(f"pow_scalar: non-positive base with fractional exponent {p}")
    out = av ** p

    def back(g):
        return (g * p * av ** (p - 1.0),)

    return a.tape._push("pow", (a,), out, back)


def signed_pow(a: Node, p: float) -> Node:
    """Odd power extension ``sign(a)*|a|**p``, equal to ``a**p`` for ``a > 0``.

    Defined for every real input and differentiable at 0 when ``p > 1``.
    """
    p = float(p)
    av = a.value
    mag = np.abs(av)
    out = np.sign(av) * mag ** p

    def back(g):
        return (g * p * mag ** (p - 1.0),)

    return a.tape._push("signed_pow", (a,), out, back)


def square(a: Node) -> Node:
    av = a.value
    return a.tape._push("square", (a,), av * av, lambda g: (2.0 * g * av,))


def relu(a: Node) -> Node:
    # Subgradient at exactly 0 is 0.
    mask = a.value > 0
    return a.tape._push("relu", (a,), np.where(mask, a.value, 0.0), lambda g: (g * mask,))


def sum_(a: Node) -> Node:
    shape = a.shape
    return a.tape._push("sum", (a,), np.array([[a.value.sum()]]),
                        lambda g: (np.full(shape, g[0, 0]),))


def mean(a: Node) -> Node:
    shape = a.shape
    n = a.value.size
    return a.tape._push("mean", (a,), np.array([[a.value.mean()]]),
                        lambda g: (np.full(shape, g[0, 0] / n),))


def columns(a: Node, idx: int | slice | Sequence[int]) -> Node:
    """Select columns of ``a``; the result is always 2-D."""
    if isinstance(idx, int):
        idx = [idx]
    shape = a.shape
    out = a.value[:, idx]

    def back(g):
        full = np.zeros(shape)
        full[:, idx] += g
        return (full,)

    return a.tape._push("columns", (a,), out, back)


def concat(nodes: Sequence[Node], axis: int = 1) -> Node:
    nodes = list(nodes)
    if not nodes:
        raise ContractError("concat needs at least one node")
    try:
        out = np.concatenate([n.value for n in nodes], axis=axis)
    except ValueError:
        shapes = ", ".join(str(n.shape) for n in nodes)
        raise ShapeError(f"concat: incompatible shapes {shapes}") from None
    splits = np.cumsum([n.shape[axis] for n in nodes])[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return nodes[0].tape._push("concat", tuple(nodes), out, back)


def backward(tape: Tape, output: Node, seed: float = 1.0,
             params: Iterable[Param] | None = None) -> dict[str, np.ndarray]:
    """Propagate adjoints from the scalar ``output`` back to every leaf.

    Returns gradients keyed by param id for every param bound to the tape
    (plus any extra ``params``); params the output does not depend on get
    exact zeros. Adjoints are reset first, so repeated calls are idempotent.
    """
    if output.shape != (1, 1):
        raise ContractError(f"backward needs a 1x1 output, got shape {output.shape}")
    if output.tape is not tape:
        raise ContractError("output node belongs to a different tape")
    tape.zero_grad()
    output.grad = np.array([[float(seed)]])
    nodes = tape.nodes
    for i in range(output.index, -1, -1):
        node = nodes[i]
        if node.grad is None or node.backward_fn is None:
            continue
        for parent, g in zip(node.parents, node.backward_fn(node.grad)):
            if parent.grad is None:
                parent.grad = np.array(g, dtype=np.float64, copy=True)
            else:
                parent.grad += g

    grads = {}
    for pid, leaf in tape._leaves.items():
        grads[pid] = leaf.grad if leaf.grad is not None else np.zeros(leaf.shape)
    for p in params or ():
        grads.setdefault(p.id, np.zeros(p.shape))
    return grads


def sgd_step(params: Iterable[Param], grads: Mapping[str, np.ndarray],
             learning_rate: float) -> list[Param]:
    """Plain gradient descent: ``value -= learning_rate * grad`` in place."""
    if not learning_rate > 0:
        raise ContractError(f"learning_rate must be positive, got {learning_rate}")
    params = list(params)
    for p in params:
        g = grads.get(p.id)
        if g is not None:
            p.value = p.value - learning_rate * g
    return params


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform in ``[-a, a]`` with ``a = sqrt(6 / (fan_in + fan_out))``."""
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))
