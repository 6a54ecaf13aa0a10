"""Reverse-mode tape and the numeric primitives shared by plain and AD evaluation.

Every primitive has one plain implementation.  When any argument is a
:class:`Node` the primitive records a node whose value is computed with that
same plain implementation, so a taped evaluation produces bit-identical
values to an untaped one.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

__all__ = [
    "Tape", "Node", "value_of", "is_node",
    "add", "sub", "mul", "div", "neg", "power", "exp", "log", "sqrt", "logistic",
    "softplus", "lgamma", "sum", "dot", "matmul", "index", "stack", "where",
    "transpose", "reshape",
]


class Tape:
    """Linear record of nodes; parents always precede children."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.forward_sweeps = 0
        self.reverse_sweeps = 0
        self.reverse_visits = 0

    def input(self, value) -> "Node":
        if isinstance(value, np.ndarray):
            value = np.array(value, dtype=float)
        else:
            value = float(value)
        return Node(self, "input", value, (), None)

    def gradient(self, output: "Node", wrt: "Node"):
        """One reverse sweep from ``output``; returns d output / d ``wrt``."""
        if not isinstance(output, Node):
            return np.zeros_like(wrt.value)
        self.reverse_sweeps += 1
        adj = [None] * len(self.nodes)
        adj[output.index] = 1.0
        for node in reversed(self.nodes[: output.index + 1]):
            self.reverse_visits += 1
            g = adj[node.index]
            if g is None or node.backward is None:
                continue
            for parent, pg in zip(node.parents, node.backward(g)):
                if pg is None:
                    continue
                i = parent.index
                adj[i] = pg if adj[i] is None else adj[i] + pg
        g = adj[wrt.index]
        if g is None:
            return np.zeros_like(wrt.value)
        return np.broadcast_to(g, np.shape(wrt.value)).astype(float)


class Node:
    __slots__ = ("tape", "op", "value", "parents", "backward", "index")

    # Make numpy defer to our reflected operators instead of building object arrays.
    __array_ufunc__ = None

    def __init__(self, tape, op, value, parents, backward):
        self.tape = tape
        self.op = op
        self.value = value
        self.parents = parents
        self.backward = backward
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    def __repr__(self):
        return f"Node({self.op}, {self.value!r})"

    @property
    def shape(self):
        return np.shape(self.value)

    def __len__(self):
        return len(self.value)

    __add__ = lambda a, b: add(a, b)
    __radd__ = lambda a, b: add(b, a)
    __sub__ = lambda a, b: sub(a, b)
    __rsub__ = lambda a, b: sub(b, a)
    __mul__ = lambda a, b: mul(a, b)
    __rmul__ = lambda a, b: mul(b, a)
    __truediv__ = lambda a, b: div(a, b)
    __rtruediv__ = lambda a, b: div(b, a)
    __pow__ = lambda a, b: power(a, b)
    __rpow__ = lambda a, b: power(b, a)
    __matmul__ = lambda a, b: matmul(a, b)
    __rmatmul__ = lambda a, b: matmul(b, a)
    __neg__ = lambda a: neg(a)
    __getitem__ = lambda a, i: index(a, i)


def is_node(x) -> bool:
    return isinstance(x, Node)


def value_of(x):
    return x.value if isinstance(x, Node) else x


def _tape_of(*args):
    for a in args:
        if isinstance(a, Node):
            return a.tape
    return None


def _scalarize(v):
    if isinstance(v, np.ndarray) and v.ndim == 0:
        return float(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def _unbroadcast(g, shape):
    gshape = np.shape(g)
    if gshape == shape:
        return g
    if shape == ():
        return float(np.sum(g))
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _record(op, value, args, partials):
    """Create a node; ``partials`` maps upstream grad g to one grad per arg."""
    tape = _tape_of(*args)
    parents = tuple(a for a in args if isinstance(a, Node))
    mask = tuple(isinstance(a, Node) for a in args)

    def backward(g):
        grads = partials(g)
        return tuple(gr for gr, m in zip(grads, mask) if m)

    return Node(tape, op, _scalarize(value), parents, backward)


# -- plain scalar/array kernels ---------------------------------------------

def _p_log(x):
    if isinstance(x, np.ndarray):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(x)
    if x > 0:
        return math.log(x)
    return -math.inf if x == 0 else math.nan


def _p_exp(x):
    if isinstance(x, np.ndarray):
        with np.errstate(over="ignore"):
            return np.exp(x)
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _p_sqrt(x):
    if isinstance(x, np.ndarray):
        with np.errstate(invalid="ignore"):
            return np.sqrt(x)
    return math.sqrt(x) if x >= 0 else math.nan


def _p_logistic(x):
    if isinstance(x, np.ndarray):
        return special.expit(x)
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _p_softplus(x):
    if isinstance(x, np.ndarray):
        return np.logaddexp(0.0, x)
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def _p_lgamma(x):
    if isinstance(x, np.ndarray):
        return special.gammaln(x)
    return math.lgamma(x) if x > 0 else special.gammaln(x)


def _p_digamma(x):
    return special.digamma(x)


# -- primitives ----------------------------------------------------------------

def add(a, b):
    va, vb = value_of(a), value_of(b)
    out = va + vb
    if not (isinstance(a, Node) or isinstance(b, Node)):
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return _record("add", out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    va, vb = value_of(a), value_of(b)
    out = va - vb
    if not (isinstance(a, Node) or isinstance(b, Node)):
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return _record("sub", out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    va, vb = value_of(a), value_of(b)
    out = va * vb
    if not (isinstance(a, Node) or isinstance(b, Node)):
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return _record("mul", out, (a, b), lambda g: (_unbroadcast(g * vb, sa), _unbroadcast(g * va, sb)))


def div(a, b):
    va, vb = value_of(a), value_of(b)
    out = va / vb
    if not (isinstance(a, Node) or isinstance(b, Node)):
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return _record(
        "div", out, (a, b),
        lambda g: (_unbroadcast(g / vb, sa), _unbroadcast(-g * va / (vb * vb), sb)),
    )


def neg(a):
    if not isinstance(a, Node):
        return -a
    return _record("neg", -a.value, (a,), lambda g: (-g,))


def power(a, b):
    va, vb = value_of(a), value_of(b)
    out = va ** vb
    if not (isinstance(a, Node) or isinstance(b, Node)):
        return out
    sa, sb = np.shape(va), np.shape(vb)

    def partials(g):
        ga = _unbroadcast(g * vb * va ** (vb - 1), sa) if isinstance(a, Node) else None
        gb = _unbroadcast(g * out * _p_log(va), sb) if isinstance(b, Node) else None
        return ga, gb

    return _record("pow", out, (a, b), partials)


def exp(a):
    out = _p_exp(value_of(a))
    if not isinstance(a, Node):
        return out
    return _record("exp", out, (a,), lambda g: (g * out,))


def log(a):
    va = value_of(a)
    out = _p_log(va)
    if not isinstance(a, Node):
        return out
    return _record("log", out, (a,), lambda g: (g / va,))


def sqrt(a):
    out = _p_sqrt(value_of(a))
    if not isinstance(a, Node):
        return out
    return _record("sqrt", out, (a,), lambda g: (g / (2.0 * out),))


def logistic(a):
    out = _p_logistic(value_of(a))
    if not isinstance(a, Node):
        return out
    return _record("logistic", out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a):
    """log(1 + exp(a)), overflow-safe."""
    va = value_of(a)
    out = _p_softplus(va)
    if not isinstance(a, Node):
        return out
    return _record("softplus", out, (a,), lambda g: (g * _p_logistic(va),))


def lgamma(a):
    va = value_of(a)
    out = _p_lgamma(va)
    if not isinstance(a, Node):
        return out
    return _record("lgamma", out, (a,), lambda g: (g * _p_digamma(va),))


def sum(a):  # noqa: A001 - mirrors the DSL builtin
    va = value_of(a)
    out = float(np.sum(va)) if isinstance(va, np.ndarray) else va
    if not isinstance(a, Node):
        return out
    shape = np.shape(va)
    return _record("sum", out, (a,), lambda g: (np.full(shape, g) if shape else g,))


def dot(a, b):
    va, vb = value_of(a), value_of(b)
    out = float(np.dot(va, vb))
    if not (isinstance(a, Node) or isinstance(b, Node)):
        return out
    return _record("dot", out, (a, b), lambda g: (g * vb, g * va))


def matmul(a, b):
    va, vb = value_of(a), value_of(b)
    out = va @ vb
    if not (isinstance(a, Node) or isinstance(b, Node)):
        return out

    def partials(g):
        ga = gb = None
        if isinstance(a, Node):
            ga = np.outer(g, vb) if np.ndim(vb) == 1 else g @ vb.T
        if isinstance(b, Node):
            gb = va.T @ g
        return ga, gb

    return _record("matvec", out, (a, b), partials)


def index(a, i):
    """0-based indexing: int, slice or integer array (gather)."""
    va = value_of(a)
    out = va[i]
    if not isinstance(a, Node):
        return out
    shape = np.shape(va)

    def partials(g):
        full = np.zeros(shape)
        np.add.at(full, i, g)
        return (full,)

    return _record("index", out, (a,), partials)


def stack(items):
    values = [value_of(x) for x in items]
    out = np.array(values, dtype=float)
    if not any(isinstance(x, Node) for x in items):
        return out
    return _record("stack", out, tuple(items), lambda g: tuple(g[k] for k in range(len(items))))


def where(cond, a, b):
    """Select elementwise; ``cond`` must be a constant boolean array."""
    va, vb = value_of(a), value_of(b)
    out = np.where(cond, va, vb)
    if not (isinstance(a, Node) or isinstance(b, Node)):
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return _record(
        "where", out, (a, b),
        lambda g: (_unbroadcast(np.where(cond, g, 0.0), sa), _unbroadcast(np.where(cond, 0.0, g), sb)),
    )


def transpose(a):
    va = value_of(a)
    out = np.transpose(va)
    if not isinstance(a, Node):
        return out
    return _record("transpose", out, (a,), lambda g: (np.transpose(g),))


def reshape(a, shape):
    va = value_of(a)
    out = np.reshape(va, shape)
    if not isinstance(a, Node):
        return out
    orig = np.shape(va)
    return _record("reshape", out, (a,), lambda g: (np.reshape(g, orig),))
