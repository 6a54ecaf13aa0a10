"""Probability queries of the form ``lhs | rhs``.

    X = [1.0, 2.0]', y = [2.0] | w = [0.5, 0.0], s = 1.0, model = linreg
    w = [1.0, 1.0]', s = 1.0 | model = linreg
    X = [1.0, 1.0]', y = [2.0] | chain = runs/linreg.csv

Each query is classified as a prior, likelihood, joint or posterior
predictive query and evaluated to a log-probability.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .addressing import VarName, varname_parse
from .chain import Chain, load_csv
from .dsl import ast as A
from .errors import ClassifyError, DimensionError, EvalError, NotFound, ParseError
from .interpreter import (
    DEFAULT, MISSING, LikelihoodContext, PriorContext, as_value, evaluate, instantiate,
)
from .trace import UntypedTrace

__all__ = [
    "QueryExpr", "QueryKind", "Registry", "parse_query", "classify", "evaluate_query",
    "run_query", "log_mean_exp", "default_registry",
]

RESERVED = ("model", "chain")


class QueryKind(enum.Enum):
    PRIOR = "prior"
    LIKELIHOOD = "likelihood"
    JOINT = "joint"
    POSTERIOR_PREDICTIVE = "posterior_predictive"

    def __str__(self):
        return self.value


@dataclass(frozen=True, eq=False)
class QueryExpr:
    lhs: dict
    rhs: dict
    model: Optional[str] = None
    chain: Optional[str] = None


# -- parsing ------------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"[^"]*")
  | (?P<punct>[\[\],=|'])
""", re.VERBOSE)


def _tokenize(s: str):
    out, pos = [], 0
    while pos < len(s):
        m = _TOKEN.match(s, pos)
        if m is None:
            # anything else is only legal inside a bare chain path
            out.append(("other", s[pos], pos))
            pos += 1
            continue
        if m.lastgroup != "ws":
            out.append((m.lastgroup if m.lastgroup != "punct" else m.group(), m.group(), pos))
        pos = m.end()
    out.append(("eof", "", len(s)))
    return out


class _QueryParser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def error(self, msg, tok=None):
        tok = tok or self.toks[self.i]
        return ParseError(msg, 1, tok[2] + 1)

    def peek(self):
        return self.toks[self.i]

    def take(self, kind, what=None):
        tok = self.toks[self.i]
        if tok[0] != kind:
            found = "end of input" if tok[0] == "eof" else repr(tok[1])
            raise self.error(f"expected {what or repr(kind)}, found {found}")
        self.i += 1
        return tok

    def parse(self) -> QueryExpr:
        if self.peek()[0] == "eof":
            raise self.error("empty query")
        lhs = self.bindings()
        if self.peek()[0] != "|":
            tok = self.peek()
            what = "end of input" if tok[0] == "eof" else repr(tok[1])
            raise self.error(f"expected ',' or '|', found {what}")
        bar = self.take("|")
        rhs = self.bindings()
        self.take("eof", "',' or end of input")
        for key, (tok, _) in lhs.items():
            if key in RESERVED:
                raise self.error(f"'{key}' may only appear on the right-hand side", tok)
        for key, (tok, _) in rhs.items():
            if key in lhs:
                raise self.error(f"'{key}' is bound on both sides", tok)
        model = rhs.pop("model", (None, None))[1]
        chain = rhs.pop("chain", (None, None))[1]
        if (model is None) == (chain is None):
            raise self.error("the right-hand side needs exactly one of 'model' or 'chain'", bar)
        return QueryExpr({k: v for k, (_, v) in lhs.items()}, {k: v for k, (_, v) in rhs.items()},
                         model, chain)

    def bindings(self):
        out = {}
        while True:
            key_tok = self.take("ident", "an identifier")
            key = key_tok[1]
            if key in out:
                raise self.error(f"duplicate key '{key}'", key_tok)
            self.take("=", "'='")
            if key == "model":
                value = self.take("ident", "a model name")[1]
            elif key == "chain":
                value = self.chain_ref()
            else:
                value = self.literal()
            out[key] = (key_tok, value)
            if self.peek()[0] != ",":
                return out
            self.take(",")

    def chain_ref(self) -> str:
        tok = self.peek()
        if tok[0] == "string":
            self.i += 1
            if len(tok[1]) == 2:
                raise self.error("empty chain path", tok)
            return tok[1][1:-1]
        start = tok[2]
        while self.peek()[0] not in ("eof", ",", "|"):
            self.i += 1
        end = self.peek()[2]
        ref = self.text[start:end].strip()
        if not ref:
            raise self.error("expected a chain path or handle", tok)
        return ref

    def literal(self):
        tok = self.peek()
        if tok[0] == "number":
            self.i += 1
            return _number(tok[1])
        if tok[0] == "ident" and tok[1] == "missing":
            self.i += 1
            return MISSING
        if tok[0] == "[":
            value = self.array()
            if self.peek()[0] == "'":
                self.i += 1
                value = value.astype(float)
                value = value.reshape(1, -1) if value.ndim == 1 else value.T
            return value
        found = "end of input" if tok[0] == "eof" else repr(tok[1])
        raise self.error(f"expected a number, 'missing' or a vector, found {found}")

    def array(self) -> np.ndarray:
        open_tok = self.take("[")
        items = []
        if self.peek()[0] != "]":
            while True:
                tok = self.peek()
                if tok[0] == "number":
                    self.i += 1
                    items.append(_number(tok[1]))
                elif tok[0] == "[":
                    items.append(self.array())
                else:
                    found = "end of input" if tok[0] == "eof" else repr(tok[1])
                    raise self.error(f"expected a number or '[', found {found}")
                if self.peek()[0] != ",":
                    break
                self.i += 1
        self.take("]", "',' or ']'")
        if not items:
            return np.zeros(0)
        nested = [isinstance(x, np.ndarray) for x in items]
        if any(nested):
            if not all(nested) or any(x.ndim != 1 for x in items):
                raise self.error("matrix literals must be lists of number rows", open_tok)
            if len({x.size for x in items}) != 1:
                raise self.error("matrix rows must have equal length", open_tok)
            return np.array(items, dtype=float)
        if all(isinstance(x, int) for x in items):
            return np.array(items, dtype=np.int64)
        return np.array(items, dtype=float)


def _number(text: str):
    if any(c in text for c in ".eE"):
        return float(text)
    return int(text)


def parse_query(s: str) -> QueryExpr:
    """Parse ``lhs | rhs``; errors carry the 1-based column of the offending token."""
    if not isinstance(s, str):
        raise TypeError("query must be a string")
    return _QueryParser(s).parse()


# -- classification -------------------------------------------------------------------

def _model_sets(decl: A.ModelDecl):
    data_args = list(decl.params)
    params = [s for s in A.tilde_symbols(decl) if s not in decl.params]
    return data_args, params


def classify(q: QueryExpr, decl: A.ModelDecl) -> QueryKind:
    data_args, params = _model_sets(decl)
    known = set(data_args) | set(params)
    L, R = set(q.lhs), set(q.rhs)
    unknown = sorted((L | R) - known)
    if unknown:
        raise ClassifyError(f"unknown identifier(s) for model {decl.name}: {', '.join(unknown)}")
    D, P = set(data_args), set(params)
    if q.chain is not None:
        if R:
            raise ClassifyError(
                f"parameters come from the chain; unexpected right-hand side binding(s): {', '.join(sorted(R))}")
        if L != D:
            raise ClassifyError(_coverage("data arguments", D, L, data_args))
        return QueryKind.POSTERIOR_PREDICTIVE
    if L and L <= P and not R:
        return QueryKind.PRIOR
    if L == D and R == P:
        return QueryKind.LIKELIHOOD
    if L == D | P and not R:
        return QueryKind.JOINT
    unbound = [p for p in params if p not in L | R]
    if L >= D and unbound:
        raise ClassifyError(f"incomplete conditioning: parameter(s) not bound: {', '.join(unbound)}")
    if not L >= D and not L <= P:
        missing_data = [a for a in data_args if a not in L]
        raise ClassifyError(f"data argument(s) not bound on the left-hand side: {', '.join(missing_data)}")
    if R & D:
        raise ClassifyError(f"data argument(s) on the right-hand side: {', '.join(sorted(R & D))}")
    raise ClassifyError(
        f"bindings {', '.join(sorted(L))} | {', '.join(sorted(R)) or 'model'} match no query kind")


def _coverage(what, wanted, got, order):
    missing = [a for a in order if a not in got]
    extra = sorted(got - wanted)
    parts = []
    if missing:
        parts.append(f"{what} not bound: {', '.join(missing)}")
    if extra:
        parts.append(f"not {what}: {', '.join(extra)}")
    return "; ".join(parts)


# -- registry ----------------------------------------------------------------------------

@dataclass(frozen=True)
class RegisteredModel:
    decl: A.ModelDecl
    defaults: Optional[dict] = None


class Registry:
    """Model name -> declaration plus optional default data."""

    def __init__(self):
        self._models: dict[str, RegisteredModel] = {}

    def add(self, decl: A.ModelDecl, defaults: Optional[dict] = None):
        self._models[decl.name] = RegisteredModel(decl, defaults)

    def get(self, name: str) -> RegisteredModel:
        try:
            return self._models[name]
        except KeyError:
            raise NotFound(f"unknown model '{name}'") from None

    def __contains__(self, name):
        return name in self._models

    def names(self):
        return list(self._models)


def default_registry() -> Registry:
    from . import corpus

    reg = Registry()
    for mid in corpus.MODEL_IDS:
        reg.add(corpus.decl(mid), corpus.default_data(mid))
    return reg


# -- evaluation ----------------------------------------------------------------------------

class _ConditionedTrace(UntypedTrace):
    """Untyped trace whose first-seen variables take bound values instead of draws."""

    def __init__(self, fixed: Mapping):
        super().__init__()
        self.fixed = {k: _as_array_or_scalar(v) for k, v in fixed.items()}
        self.consumed = dict.fromkeys(self.fixed, 0)

    def fresh(self, vn: VarName, dist, rng):
        if vn.symbol not in self.fixed:
            return super().fresh(vn, dist, rng)
        value = _select(self.fixed[vn.symbol], vn)
        template = dist.sample(np.random.default_rng(0))
        value = _coerce(value, template, vn)
        self.consumed[vn.symbol] += int(np.size(value))
        self.push(vn, value, dist)
        return value


def _as_array_or_scalar(v):
    v = as_value(v)
    if v is MISSING:
        raise EvalError("parameters cannot be bound to missing")
    return v


def _select(value, vn: VarName):
    for group in vn.path:
        arr = np.asarray(value)
        if arr.ndim == 2 and 1 in arr.shape and len(group) == 1:
            arr = arr.ravel()
        if len(group) != arr.ndim:
            raise DimensionError(f"{vn}: bound value of shape {arr.shape} cannot be indexed this way")
        idx = []
        for k, n in zip(group, arr.shape):
            if not isinstance(k, int) or not 1 <= k <= n:
                raise DimensionError(f"{vn}: index out of range for bound value of shape {arr.shape}")
            idx.append(k - 1)
        value = arr[tuple(idx)]
    return value


def _coerce(value, template, vn):
    tshape = np.shape(template)
    arr = np.asarray(value)
    if arr.size != int(np.prod(tshape)):
        raise DimensionError(
            f"{vn}: bound value has {arr.size} element(s), the model expects {int(np.prod(tshape))}")
    integral = np.asarray(template).dtype.kind in "iub"
    if integral:
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise EvalError(f"{vn}: expected integer values")
        arr = arr.astype(np.int64)
    else:
        arr = arr.astype(float)
    if tshape == ():
        return int(arr.reshape(())) if integral else float(arr.reshape(()))
    return arr.reshape(tshape)


def _evaluate_fixed(decl, args, fixed, ctx, seed=0) -> float:
    m = instantiate(decl, args)
    t = _ConditionedTrace(fixed)
    lp = evaluate(m, t, ctx, np.random.default_rng(seed))
    for sym, v in t.fixed.items():
        if t.consumed[sym] == 0:
            raise EvalError(f"'{sym}' is bound but the model never draws it")
        if t.consumed[sym] != np.size(v):
            raise DimensionError(
                f"'{sym}': bound value has {np.size(v)} element(s), the model uses {t.consumed[sym]}")
    return lp


def log_mean_exp(x) -> float:
    """log(mean(exp(x))) without overflow or underflow."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("log_mean_exp of an empty sequence")
    top = x.max()
    if top == -math.inf:
        return -math.inf
    if math.isnan(top):
        return math.nan
    return float(top + np.log(np.mean(np.exp(x - top))))


def _chain_parameters(chain: Chain, params):
    """Per-symbol column layout: symbol -> (column indices, scalar?)."""
    layout = {}
    for j, name in enumerate(chain.names):
        vn = varname_parse(name)
        layout.setdefault(vn.symbol, []).append((vn, j))
    out = {}
    for sym, cols in layout.items():
        if sym not in params:
            raise EvalError(f"chain column '{sym}' is not a parameter of the model")
        if len(cols) == 1 and cols[0][0].path == ():
            out[sym] = ([cols[0][1]], True)
            continue
        order = []
        for vn, j in cols:
            if len(vn.path) != 1 or len(vn.path[0]) != 1:
                raise EvalError(f"chain column '{vn}' is not a scalar or vector element")
            order.append((vn.path[0][0], j))
        order.sort()
        if [k for k, _ in order] != list(range(1, len(order) + 1)):
            raise EvalError(f"chain columns for '{sym}' are not indexed 1..{len(order)}")
        out[sym] = ([j for _, j in order], False)
    missing = [p for p in params if p not in out]
    if missing:
        raise EvalError(f"chain has no columns for parameter(s): {', '.join(missing)}")
    return out


def _resolve_chain(q: QueryExpr, chains: Optional[Mapping]) -> Chain:
    if chains is not None and q.chain in chains:
        return chains[q.chain]
    try:
        return load_csv(q.chain)
    except FileNotFoundError:
        raise NotFound(f"no chain '{q.chain}' (not a known handle or a readable file)") from None


def evaluate_query(q: QueryExpr, registry: Registry, chains: Optional[Mapping] = None) -> float:
    """Log-probability of ``q``.  ``chains`` maps handles to in-memory chains."""
    return _evaluate(q, registry, chains)[1]


def _evaluate(q: QueryExpr, registry: Registry, chains: Optional[Mapping]):
    chain = None
    if q.chain is not None:
        chain = _resolve_chain(q, chains)
        model_name = chain.meta.get("model")
        if model_name is None:
            raise ClassifyError("the chain does not record which model produced it")
    else:
        model_name = q.model
    entry = registry.get(str(model_name))
    decl = entry.decl
    kind = classify(q, decl)
    data_args, params = _model_sets(decl)
    defaults = entry.defaults or {}
    args = {}
    for a in data_args:
        if a in q.lhs:
            args[a] = q.lhs[a]
        elif a in defaults:
            args[a] = defaults[a]
        else:
            args[a] = MISSING
    if kind is QueryKind.PRIOR:
        fixed = dict(q.lhs)
        return kind, _evaluate_fixed(decl, args, fixed, PriorContext(frozenset(fixed)))
    if kind is QueryKind.LIKELIHOOD:
        return kind, _evaluate_fixed(decl, args, dict(q.rhs), LikelihoodContext())
    if kind is QueryKind.JOINT:
        fixed = {p: q.lhs[p] for p in params}
        return kind, _evaluate_fixed(decl, args, fixed, DEFAULT)
    layout = _chain_parameters(chain, params)
    if len(chain) == 0:
        raise EvalError("the chain has no draws")
    lls = np.empty(len(chain))
    for i, row in enumerate(chain.draws):
        fixed = {s: (float(row[c[0]]) if scalar else row[c]) for s, (c, scalar) in layout.items()}
        lls[i] = _evaluate_fixed(decl, args, fixed, LikelihoodContext())
    return kind, log_mean_exp(lls)


def run_query(text: str, registry: Optional[Registry] = None, chains: Optional[Mapping] = None):
    """Parse, classify and evaluate a query string; returns ``(kind, log-probability)``."""
    return _evaluate(parse_query(text), registry or default_registry(), chains)
