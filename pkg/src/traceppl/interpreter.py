"""Model instantiation and evaluation.

A model body is executed statement by statement against a trace under a
context.  ``~`` on an observed argument is an *observe*; on anything else it
is an *assume* that reads (or first samples) the value recorded in the trace.
``.~`` does the same elementwise.  ``reject`` forces the log-probability to
-inf and stops the run.

Untyped traces are visited one entry at a time.  On a typed trace, an
elementwise assume over a whole symbol reads one contiguous slice of that
symbol's buffer and evaluates the density in a single vectorised call.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import tape as T
from .addressing import VarName
from .distributions import DISTRIBUTIONS, Distribution, bijector_of, make_distribution
from .dsl import ast as A
from .errors import DimensionError, EvalError, ModelDomainError
from .trace import TypedTrace

__all__ = [
    "MISSING", "Missing", "DefaultContext", "LikelihoodContext", "PriorContext",
    "MiniBatchContext", "Context", "DEFAULT", "Model", "EvalStats", "instantiate",
    "evaluate", "tilde_assume", "tilde_observe", "as_value", "evaluation_counter",
]

# trace kind -> number of model evaluations run on that kind of trace
evaluation_counter: Counter = Counter()


class Missing:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "missing"

    def __reduce__(self):
        return (Missing, ())


MISSING = Missing()


# -- contexts -------------------------------------------------------------------

@dataclass(frozen=True)
class DefaultContext:
    """Log joint: every tilde statement accumulates."""


@dataclass(frozen=True)
class LikelihoodContext:
    """Only observations accumulate."""


@dataclass(frozen=True)
class PriorContext:
    """Only parameters accumulate; ``vars`` restricts which symbols count."""

    vars: Optional[frozenset] = None


@dataclass(frozen=True)
class MiniBatchContext:
    """Scale observation terms of ``inner`` by ``weight`` (typically N / batch size)."""

    inner: object = field(default_factory=DefaultContext)
    weight: float = 1.0

    def __post_init__(self):
        if isinstance(self.inner, MiniBatchContext):
            raise ValueError("MiniBatchContext cannot wrap another MiniBatchContext")
        if not isinstance(self.inner, (DefaultContext, LikelihoodContext, PriorContext)):
            raise ValueError(f"invalid inner context {self.inner!r}")
        if not (self.weight > 0 and math.isfinite(self.weight)):
            raise ValueError("minibatch weight must be a positive finite number")


Context = (DefaultContext, LikelihoodContext, PriorContext, MiniBatchContext)
DEFAULT = DefaultContext()


def _assume_counts(ctx, symbol: str) -> bool:
    if isinstance(ctx, MiniBatchContext):
        ctx = ctx.inner
    if isinstance(ctx, LikelihoodContext):
        return False
    if isinstance(ctx, PriorContext):
        return ctx.vars is None or symbol in ctx.vars
    return True


def _observe_weight(ctx):
    """Multiplier for observation terms, or None when they are skipped."""
    if isinstance(ctx, MiniBatchContext):
        inner = _observe_weight(ctx.inner)
        return None if inner is None else inner * ctx.weight
    if isinstance(ctx, PriorContext):
        return None
    return 1.0


# -- values ---------------------------------------------------------------------

def as_value(obj):
    """Convert Python/JSON data into an interpreter value."""
    if obj is None or obj is MISSING or (isinstance(obj, str) and obj == "missing"):
        return MISSING
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, str):
        raise EvalError(f"unsupported data value {obj!r}")
    arr = np.asarray(obj)
    if arr.dtype == object:
        raise EvalError("ragged or non-numeric array in data")
    if arr.ndim == 0:
        return as_value(arr.item())
    if arr.ndim > 2:
        raise EvalError("data arrays may have at most two dimensions")
    if arr.dtype.kind in "iu":
        if arr.ndim == 2:
            return arr.astype(float)
        return arr.astype(np.int64)
    if arr.dtype.kind == "b":
        return arr.astype(np.int64)
    if arr.dtype.kind == "f":
        return arr.astype(float)
    raise EvalError(f"unsupported data array of dtype {arr.dtype}")


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, (bool, np.bool_))


def _describe(v):
    if v is MISSING:
        return "missing"
    raw = T.value_of(v)
    if isinstance(raw, (bool, np.bool_)):
        return "Bool"
    if np.ndim(raw) == 0:
        return "Int" if _is_int(raw) else "Real"
    if np.ndim(raw) == 1:
        return f"vector of length {len(raw)}"
    return f"{raw.shape[0]}x{raw.shape[1]} matrix"


class _PartialArray:
    """Elements of a symbol assumed one index at a time (``x[2] ~ ...``)."""

    def __init__(self):
        self.items = {}


# -- model ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Model:
    decl: A.ModelDecl
    data: Mapping
    param_args: frozenset
    ordinals: Mapping = field(repr=False, default=None)

    @property
    def name(self):
        return self.decl.name

    def is_observed(self, symbol: str) -> bool:
        return symbol in self.data and self.data[symbol] is not MISSING

    @property
    def parameters(self) -> list[str]:
        return [s for s in A.tilde_symbols(self.decl) if not self.is_observed(s)]

    @property
    def observations(self) -> list[str]:
        return [s for s in A.tilde_symbols(self.decl) if self.is_observed(s)]

    def __reduce__(self):
        # statement ordinals are keyed by object id; rebuild them after unpickling
        return (instantiate, (self.decl, dict(self.data)))

    def with_data(self, **changes) -> "Model":
        data = dict(self.data)
        data.update(changes)
        return instantiate(self.decl, data)


def instantiate(decl: A.ModelDecl, args: Mapping) -> Model:
    given, wanted = set(args), set(decl.params)
    if given != wanted:
        parts = []
        if wanted - given:
            parts.append("missing argument(s): " + ", ".join(sorted(wanted - given)))
        if given - wanted:
            parts.append("unexpected argument(s): " + ", ".join(sorted(given - wanted)))
        raise EvalError(f"model {decl.name}: " + "; ".join(parts))
    data = {k: as_value(args[k]) for k in decl.params}
    ordinals = {id(s): i for i, s in enumerate(A.walk_statements(decl.body))}
    return Model(decl, data, frozenset(k for k, v in data.items() if v is MISSING), ordinals)


@dataclass
class EvalStats:
    """Per-statement execution counts for one or more evaluations."""

    executed: Counter = field(default_factory=Counter)
    rejected_at: Optional[int] = None

    def executed_after(self, ordinal: int) -> int:
        return sum(c for o, c in self.executed.items() if o > ordinal)


class _Reject(Exception):
    pass


# -- evaluation ---------------------------------------------------------------------

def tilde_assume(ctx, t, vn: VarName, d: Distribution, rng):
    """Value of parameter ``vn``; sampled from ``d`` and recorded if absent."""
    h = t.find(vn)
    logjac = 0.0
    if h is None:
        value = t.fresh(vn, d, rng)
    else:
        stored, _, linked = t.read(h)
        if linked:
            b = bijector_of(d)
            value = b.inverse(stored)
            logjac = b.logabsdetjac_inverse(stored)
            if np.ndim(T.value_of(logjac)):
                logjac = T.sum(logjac)
        else:
            value = stored
    if _assume_counts(ctx, vn.symbol):
        lp = d.logpdf(value)
        t.acc_logp(lp)
        if T.value_of(lp) != -math.inf:
            t.acc_logp(logjac)
    return value


def tilde_observe(ctx, t, d: Distribution, x) -> None:
    w = _observe_weight(ctx)
    if w is None:
        return
    lp = d.logpdf(x)
    t.acc_logp(lp if w == 1.0 else T.mul(w, lp))


def _num_binop(op, a, b):
    if op == "+":
        return T.add(a, b)
    if op == "-":
        return T.sub(a, b)
    if op == "*":
        return T.mul(a, b)
    if op == "/":
        if not (T.is_node(a) or T.is_node(b)) and np.ndim(b) == 0 and b == 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                return float(np.divide(float(a), 0.0)) if np.ndim(a) == 0 else np.divide(a, 0.0)
        return T.div(a, b)
    if op == "^":
        if not (T.is_node(a) or T.is_node(b)) and _is_int(a) and _is_int(b) and b >= 0:
            return a ** b
        return T.power(float(a) if not T.is_node(a) else a, b)
    raise AssertionError(op)


class _Evaluator:
    def __init__(self, model: Model, trace, ctx, rng, stats: Optional[EvalStats]):
        self.model = model
        self.trace = trace
        self.ctx = ctx
        self.rng = rng
        self.stats = stats
        self.env = dict(model.data)
        self.typed = isinstance(trace, TypedTrace)

    def fail(self, msg, node=None, cls=EvalError):
        return cls(msg, getattr(node, "span", None))

    # statements ---------------------------------------------------------------
    def run(self):
        self.exec_block(self.model.decl.body)

    def exec_block(self, body):
        stats = self.stats
        for stmt in body:
            if stats is not None:
                stats.executed[self.model.ordinals[id(stmt)]] += 1
            kind = type(stmt)
            if kind is A.Assign:
                if stmt.target in self.model.data:
                    raise self.fail(f"cannot assign to model argument {stmt.target!r}", stmt)
                self.env[stmt.target] = self.eval(stmt.value)
            elif kind is A.Tilde:
                self.exec_tilde(stmt)
            elif kind is A.DotTilde:
                self.exec_dot_tilde(stmt)
            elif kind is A.If:
                cond = self.eval(stmt.cond)
                if not isinstance(cond, (bool, np.bool_)):
                    raise self.fail(f"if condition must be Bool, got {_describe(cond)}", stmt)
                if cond:
                    self.exec_block(stmt.body)
            elif kind is A.Reject:
                if stats is not None:
                    stats.rejected_at = self.model.ordinals[id(stmt)]
                raise _Reject()
            else:
                raise self.fail(f"unknown statement {stmt!r}", stmt)

    def build_dist(self, expr):
        args = [self.eval(a) for a in expr.args]
        for a in args:
            if a is MISSING:
                raise self.fail(f"{expr.name}: argument is missing", expr)
        if isinstance(expr, A.BroadcastCall):
            return self.broadcast_dist(expr, args)
        try:
            return make_distribution(expr.name, args)
        except DimensionError as e:
            raise self.fail(str(e), expr, DimensionError) from None

    def broadcast_dist(self, expr, args):
        cls, arity = DISTRIBUTIONS[expr.name]
        if expr.name in ("MvNormal", "Categorical", "Dirichlet"):
            raise self.fail(f"{expr.name} cannot be broadcast", expr)
        n = None
        for a in args:
            shape = np.shape(T.value_of(a))
            if len(shape) > 1:
                raise self.fail(f"{expr.name}.(): matrix arguments are not supported", expr, DimensionError)
            if len(shape) == 1:
                if n is not None and shape[0] != n:
                    raise self.fail(
                        f"{expr.name}.(): argument lengths {n} and {shape[0]} differ", expr, DimensionError)
                n = shape[0]
        if n is None:
            return make_distribution(expr.name, args)
        if len(args) != arity:
            raise self.fail(f"{expr.name} takes {arity} argument(s), got {len(args)}", expr, DimensionError)
        return cls(*args)

    def exec_tilde(self, stmt: A.Tilde):
        d = self.build_dist(stmt.dist)
        name = stmt.lhs.name
        if self.model.is_observed(name):
            x = self.env[name]
            if stmt.lhs.indices:
                x = self.index_value(x, [self.eval(i) for i in stmt.lhs.indices], stmt.lhs)
            if x is MISSING:
                raise self.fail(f"observed value of {name} is missing", stmt)
            tilde_observe(self.ctx, self.trace, d, x)
            return
        if stmt.lhs.indices:
            path = tuple(self.int_index(self.eval(i), stmt.lhs) for i in stmt.lhs.indices)
            vn = VarName(name, (path,))
        else:
            vn = VarName(name)
        value = tilde_assume(self.ctx, self.trace, vn, d, self.rng)
        if stmt.lhs.indices:
            holder = self.env.get(name)
            if not isinstance(holder, _PartialArray):
                holder = _PartialArray()
                self.env[name] = holder
            holder.items[vn.path[0]] = value
        else:
            self.env[name] = value

    def exec_dot_tilde(self, stmt: A.DotTilde):
        if stmt.lhs.indices:
            raise self.fail("'.~' needs a plain identifier on the left", stmt)
        d = self.build_dist(stmt.dist)
        if d.multivariate:
            raise self.fail(f"'.~' needs a univariate distribution, got {d.name}", stmt)
        name = stmt.lhs.name
        if self.model.is_observed(name):
            x = self.env[name]
            raw = T.value_of(x)
            if np.ndim(raw) != 1:
                raise self.fail(f"'.~' observation {name} must be a vector, got {_describe(x)}",
                                stmt, DimensionError)
            if d.batched and d.size != len(raw):
                raise self.fail(f"{name} has {len(raw)} elements but the distribution has {d.size}",
                                stmt, DimensionError)
            tilde_observe(self.ctx, self.trace, d, x)
            return
        if not d.batched:
            raise self.fail(f"cannot infer the length of parameter {name} from a scalar distribution",
                            stmt, DimensionError)
        n = d.size
        if self.typed:
            g = self.trace.block(name, n)
            if g is not None:
                self.env[name] = self.assume_block(g, d)
                return
        values = []
        for i in range(n):
            vn = VarName(name, ((i + 1,),))
            values.append(tilde_assume(self.ctx, self.trace, vn, d.element(i), self.rng))
        if any(T.is_node(v) for v in values):
            self.env[name] = T.stack(values)
        elif values and all(_is_int(v) for v in values):
            self.env[name] = np.array(values, dtype=np.int64)
        else:
            self.env[name] = np.array(values, dtype=float)

    def assume_block(self, g, d):
        stored = self.trace.block_values(g)
        logjac = 0.0
        if g.linked[0]:
            b = bijector_of(d)
            value = b.inverse(stored)
            logjac = T.sum(b.logabsdetjac_inverse(stored))
        else:
            value = stored if T.is_node(stored) else stored.copy()
        if _assume_counts(self.ctx, g.symbol):
            lp = d.logpdf(value)
            self.trace.acc_logp(lp)
            if T.value_of(lp) != -math.inf:
                self.trace.acc_logp(logjac)
        return value

    # expressions ----------------------------------------------------------------
    def eval(self, e):
        kind = type(e)
        if kind is A.NumberLit:
            return e.value
        if kind is A.Ident:
            try:
                v = self.env[e.name]
            except KeyError:
                raise self.fail(f"unbound identifier {e.name!r}", e) from None
            if isinstance(v, _PartialArray):
                raise self.fail(f"{e.name} was only assumed elementwise; index it", e)
            return v
        if kind is A.Binary:
            return self.binary(e)
        if kind is A.Call:
            return self.call(e)
        if kind is A.BroadcastCall:
            return self.broadcast_call(e)
        if kind is A.Index:
            base = self.env.get(e.base.name) if isinstance(e.base, A.Ident) else None
            if isinstance(base, _PartialArray):
                key = tuple(self.int_index(self.eval(i), e) for i in e.indices)
                if key not in base.items:
                    raise self.fail(f"{e.base.name}[{','.join(map(str, key))}] is not defined", e)
                return base.items[key]
            return self.index_value(self.eval(e.base), [self.eval(i) for i in e.indices], e)
        if kind is A.Unary:
            v = self.eval(e.operand)
            if v is MISSING:
                return MISSING
            self.numeric(v, e)
            return T.neg(v)
        if kind is A.Transpose:
            v = self.eval(e.base)
            if v is MISSING:
                return MISSING
            self.numeric(v, e)
            nd = np.ndim(T.value_of(v))
            if nd == 0:
                return v
            if nd == 1:
                return T.reshape(v, (1, len(T.value_of(v))))
            return T.transpose(v)
        if kind is A.VectorLit:
            return self.vector_literal(e)
        if kind is A.MissingLit:
            return MISSING
        raise self.fail(f"unknown expression {e!r}", e)

    def numeric(self, v, node):
        if isinstance(T.value_of(v), (bool, np.bool_)):
            raise self.fail("Bool used in arithmetic", node)

    def vector_literal(self, e):
        items = [self.eval(i) for i in e.items]
        if any(v is MISSING for v in items):
            return MISSING
        dims = {np.ndim(T.value_of(v)) for v in items}
        if dims == {0}:
            for v in items:
                self.numeric(v, e)
            if any(T.is_node(v) for v in items):
                return T.stack(items)
            if all(_is_int(v) for v in items):
                return np.array(items, dtype=np.int64)
            return np.array(items, dtype=float)
        if dims == {1} and not any(T.is_node(v) for v in items):
            lengths = {len(v) for v in items}
            if len(lengths) == 1:
                return np.array(items, dtype=float)
        raise self.fail("vector literal items must be scalars or equal-length constant vectors", e)

    def int_index(self, v, node):
        if not _is_int(v):
            raise self.fail(f"index must be an Int, got {_describe(v)}", node)
        if v < 1:
            raise self.fail(f"index {v} out of range (indices are 1-based)", node)
        return int(v)

    def index_value(self, base, idx, node):
        if base is MISSING:
            return MISSING
        raw = T.value_of(base)
        nd = np.ndim(raw)
        if nd == 0 or len(idx) != nd:
            raise self.fail(f"cannot index {_describe(base)} with {len(idx)} index(es)", node, DimensionError)
        key = []
        for axis, i in enumerate(idx):
            n = raw.shape[axis]
            if isinstance(i, np.ndarray) and i.dtype.kind in "iu":
                if i.size and (i.min() < 1 or i.max() > n):
                    raise self.fail(f"index out of range 1..{n}", node, DimensionError)
                key.append(i - 1)
            else:
                k = self.int_index(i, node)
                if k > n:
                    raise self.fail(f"index {k} out of range 1..{n}", node, DimensionError)
                key.append(k - 1)
        key = key[0] if len(key) == 1 else tuple(key)
        out = T.index(base, key)
        if not T.is_node(out) and isinstance(out, np.generic):
            out = out.item()
        return out

    def binary(self, e):
        a, b = self.eval(e.lhs), self.eval(e.rhs)
        op = e.op
        if op in ("<", ">", "<=", ">=", "=="):
            if a is MISSING or b is MISSING:
                raise self.fail("comparison with missing", e)
            ra, rb = T.value_of(a), T.value_of(b)
            if np.ndim(ra) or np.ndim(rb):
                raise self.fail("comparisons are only defined for scalars", e, DimensionError)
            return bool({"<": ra < rb, ">": ra > rb, "<=": ra <= rb, ">=": ra >= rb, "==": ra == rb}[op])
        if a is MISSING or b is MISSING:
            return MISSING
        self.numeric(a, e)
        self.numeric(b, e)
        sa, sb = np.shape(T.value_of(a)), np.shape(T.value_of(b))
        if op in ("+", "-"):
            if sa != sb:
                raise self.fail(f"cannot apply {op} to {_describe(a)} and {_describe(b)}", e, DimensionError)
        elif op == "*":
            if sa and sb:
                if len(sa) == 2 and sa[1] == sb[0]:
                    return T.matmul(a, b)
                raise self.fail(f"cannot multiply {_describe(a)} by {_describe(b)}", e, DimensionError)
        elif op == "/":
            if sb:
                raise self.fail(f"cannot divide by {_describe(b)}", e, DimensionError)
        elif op == "^":
            if sa or sb:
                raise self.fail("'^' is only defined for scalars; use exp./log. for arrays", e, DimensionError)
        return _num_binop(op, a, b)

    def call(self, e):
        name = e.name
        if name in DISTRIBUTIONS:
            raise self.fail(f"distribution {name} can only appear on the right of '~'", e)
        args = [self.eval(a) for a in e.args]
        if any(a is MISSING for a in args):
            return MISSING
        if name in ("size", "zeros", "ones"):
            return self.shape_builtin(name, args, e)
        if len(args) != 1:
            raise self.fail(f"{name} takes 1 argument, got {len(args)}", e)
        (x,) = args
        self.numeric(x, e)
        if name == "sum":
            return T.sum(x) if np.ndim(T.value_of(x)) else x
        if np.ndim(T.value_of(x)):
            raise self.fail(f"{name} of an array; use {name}.(...) for elementwise application",
                            e, DimensionError)
        return self.elementwise(name, x, e)

    def broadcast_call(self, e):
        name = e.name
        if name in DISTRIBUTIONS or name not in ("logistic", "exp", "log", "sqrt"):
            raise self.fail(f"{name}.(...) cannot be used here", e)
        args = [self.eval(a) for a in e.args]
        if len(args) != 1:
            raise self.fail(f"{name} takes 1 argument, got {len(args)}", e)
        (x,) = args
        if x is MISSING:
            return MISSING
        self.numeric(x, e)
        return self.elementwise(name, x, e)

    def elementwise(self, name, x, e):
        raw = T.value_of(x)
        if name in ("log", "sqrt") and np.any(np.asarray(raw) < 0):
            raise self.fail(f"{name} of a negative number", e, ModelDomainError)
        if not T.is_node(x) and isinstance(raw, np.ndarray) and raw.dtype.kind in "iu":
            x = raw.astype(float)
        elif not T.is_node(x) and _is_int(raw):
            x = float(raw)
        return {"logistic": T.logistic, "exp": T.exp, "log": T.log, "sqrt": T.sqrt}[name](x)

    def shape_builtin(self, name, args, e):
        if name == "size":
            if len(args) not in (1, 2):
                raise self.fail("size takes 1 or 2 arguments", e)
            shape = np.shape(T.value_of(args[0]))
            if len(args) == 1:
                return np.array(shape, dtype=np.int64)
            k = args[1]
            if not _is_int(k) or k < 1:
                raise self.fail("size: dimension must be a positive Int", e)
            return int(shape[k - 1]) if k <= len(shape) else 1
        if not args or len(args) > 2 or not all(_is_int(a) and a >= 0 for a in args):
            raise self.fail(f"{name} takes one or two non-negative Int sizes", e)
        return (np.zeros if name == "zeros" else np.ones)(tuple(int(a) for a in args))


def _run(m: Model, t, ctx, rng, stats):
    if not isinstance(ctx, Context):
        raise TypeError(f"not a context: {ctx!r}")
    t.reset_logp()
    t.n_evals += 1
    evaluation_counter[t.kind] += 1
    try:
        _Evaluator(m, t, ctx, rng, stats).run()
    except _Reject:
        t.acc_logp(-math.inf)
    return t.logp


def evaluate(m: Model, t, ctx=DEFAULT, rng=None, stats: Optional[EvalStats] = None) -> float:
    """Run the model body once and return the trace's log-probability.

    Raises ModelDomainError for invalid run-time parameters and EvalError for
    model bugs.  ``reject`` is not an error: it returns -inf.
    """
    _run(m, t, ctx, rng, stats)
    return t.get_logp()
