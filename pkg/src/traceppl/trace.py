"""Execution traces: per-variable values, distributions and link flags plus
the log-probability accumulator.

``UntypedTrace`` keeps one boxed Python object per variable and is used for
the first, structure-discovering run of a model.  ``specialize`` turns it
into a ``TypedTrace`` in which every symbol owns one contiguous numpy buffer
of a single element type; repeated evaluations then read whole slices of
that buffer instead of walking individual entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .addressing import VarName, as_varname
from .distributions import Distribution, bijector_of
from .errors import NonFiniteLogp, NotDifferentiable, NotFound, SpecializationError, StateError, TraceError
from . import tape as T

__all__ = [
    "EntryMeta", "UntypedTrace", "TypedTrace", "Group", "specialize",
    "get_value", "set_value", "link", "invlink", "flatten", "unflatten",
    "acc_logp", "reset_logp", "get_logp",
]


@dataclass
class EntryMeta:
    name: VarName
    dist: Distribution
    linked: bool = False
    order: int = 0


def _is_int_value(v) -> bool:
    if isinstance(v, np.ndarray):
        return v.dtype.kind in "iub"
    return isinstance(v, (int, np.integer, bool, np.bool_))


def _shape(v):
    return np.shape(v)


class _Accumulator:
    """Shared logp bookkeeping: -inf is sticky, NaN is a bug."""

    logp = 0.0

    def acc_logp(self, delta):
        dv = T.value_of(delta)
        if isinstance(dv, np.ndarray):
            raise TraceError("log-probability increment must be a scalar")
        if math.isnan(dv):
            raise NonFiniteLogp("NaN added to the log-probability accumulator")
        lv = T.value_of(self.logp)
        if lv == -math.inf:
            return
        if dv == -math.inf:
            self.logp = -math.inf
        else:
            self.logp = T.add(self.logp, delta)

    def reset_logp(self):
        self.logp = 0.0

    def get_logp(self) -> float:
        return float(T.value_of(self.logp))


def _flat_names(name: VarName, shape) -> list[str]:
    if shape == ():
        return [str(name)]
    return [str(name.child(j + 1)) for j in range(shape[0])]


def _fresh(self, vn: VarName, dist: Distribution, rng):
    """Value for a variable seen for the first time: a draw from ``dist``."""
    if rng is None:
        raise TraceError(f"{vn} is not in the trace and no rng was given to sample it")
    value = dist.sample(rng)
    self.push(vn, value, dist)
    return value


class UntypedTrace(_Accumulator):
    kind = "untyped"

    def __init__(self):
        self.metas: list[EntryMeta] = []
        self.values: list = []
        self._index: dict[VarName, int] = {}
        self.logp = 0.0
        self.n_evals = 0

    def __len__(self):
        return len(self.metas)

    def __contains__(self, vn):
        return as_varname(vn) in self._index

    def names(self) -> list[VarName]:
        return [m.name for m in self.metas]

    # interpreter interface
    def find(self, vn: VarName):
        return self._index.get(vn)

    def read(self, handle):
        m = self.metas[handle]
        return self.values[handle], m.dist, m.linked

    fresh = _fresh

    def push(self, vn: VarName, value, dist: Distribution):
        if vn in self._index:
            raise TraceError(f"duplicate variable {vn}")
        self._index[vn] = len(self.metas)
        self.metas.append(EntryMeta(vn, dist, False, len(self.metas)))
        self.values.append(value)

    def meta(self, vn) -> EntryMeta:
        vn = as_varname(vn)
        if vn not in self._index:
            raise NotFound(f"no variable {vn} in trace")
        return self.metas[self._index[vn]]

    def get_value(self, vn):
        vn = as_varname(vn)
        i = self._index.get(vn)
        if i is None:
            raise NotFound(f"no variable {vn} in trace")
        v = self.values[i]
        return v.copy() if isinstance(v, np.ndarray) else v

    def set_value(self, vn, value):
        vn = as_varname(vn)
        i = self._index.get(vn)
        if i is None:
            raise NotFound(f"no variable {vn} in trace")
        old = self.values[i]
        if _shape(old) != _shape(value):
            raise TraceError(f"{vn}: shape {_shape(value)} does not match {_shape(old)}")
        if _is_int_value(old) and not _is_int_value(value):
            raise TraceError(f"{vn}: expected an integer value")
        if isinstance(value, np.ndarray):
            value = value.astype(np.int64 if _is_int_value(old) else float)
        elif _is_int_value(old):
            value = int(value)
        else:
            value = float(value)
        self.values[i] = value

    def constrained_flat(self):
        names, vals = [], []
        for m, v in zip(self.metas, self.values):
            if m.linked:
                v = T.value_of(bijector_of(m.dist).inverse(v))
            names.extend(_flat_names(m.name, _shape(v)))
            vals.extend(np.ravel(v).tolist())
        return names, np.array(vals, dtype=float)


class Group:
    """All entries sharing one symbol, stored in one concretely-typed buffer."""

    __slots__ = ("symbol", "names", "dists", "values", "ranges", "shapes", "linked",
                 "order", "pos", "dtype", "block")

    def __init__(self, symbol, dtype):
        self.symbol = symbol
        self.dtype = np.dtype(dtype)
        self.names: list[VarName] = []
        self.dists: list[Distribution] = []
        self.values = np.empty(0, dtype=dtype)
        self.ranges: list[tuple[int, int]] = []
        self.shapes: list[tuple] = []
        self.linked: list[bool] = []
        self.order: list[int] = []
        self.pos: dict[VarName, int] = {}
        self.block = False

    def _refresh_block(self):
        # sym[1], sym[2], ... each a scalar stored at its own slot, in order
        s = self.symbol
        self.block = bool(self.names) and all(
            n.symbol == s and n.path == ((k + 1,),) and sh == () and r == (k, k + 1)
            for k, (n, sh, r) in enumerate(zip(self.names, self.shapes, self.ranges))
        ) and len(set(self.linked)) == 1

    def get(self, i):
        a, b = self.ranges[i]
        if self.shapes[i] == ():
            return self.values[a].item()
        return self.values[a:b].copy()


class TypedTrace(_Accumulator):
    kind = "typed"

    def __init__(self):
        self.groups: dict[str, Group] = {}
        self.logp = 0.0
        self.n_evals = 0
        self._n = 0
        self._plan = None
        self._ad = None  # symbol -> Node view of the group buffer during AD

    def __len__(self):
        return self._n

    def __contains__(self, vn):
        vn = as_varname(vn)
        g = self.groups.get(vn.symbol)
        return g is not None and vn in g.pos

    def names(self) -> list[VarName]:
        items = [(o, n) for g in self.groups.values() for o, n in zip(g.order, g.names)]
        return [n for _, n in sorted(items, key=lambda t: t[0])]

    def _locate(self, vn):
        vn = as_varname(vn)
        g = self.groups.get(vn.symbol)
        if g is None or vn not in g.pos:
            raise NotFound(f"no variable {vn} in trace")
        return g, g.pos[vn]

    # interpreter interface
    def find(self, vn: VarName):
        g = self.groups.get(vn.symbol)
        if g is None:
            raise TraceError(
                f"symbol {vn.symbol!r} was not seen when the trace was specialized; "
                "re-run the model on an untyped trace and specialize again")
        i = g.pos.get(vn)
        return None if i is None else (g, i)

    def read(self, handle):
        g, i = handle
        if self._ad is not None and g.symbol in self._ad:
            a, b = g.ranges[i]
            node = self._ad[g.symbol]
            v = T.index(node, a) if g.shapes[i] == () else T.index(node, slice(a, b))
        else:
            v = g.get(i)
        return v, g.dists[i], g.linked[i]

    def block(self, symbol: str, n: int):
        g = self.groups.get(symbol)
        if g is not None and g.block and len(g.names) == n:
            return g
        return None

    def block_values(self, g: Group):
        if self._ad is not None and g.symbol in self._ad:
            return self._ad[g.symbol]
        return g.values

    fresh = _fresh

    def push(self, vn: VarName, value, dist: Distribution):
        g = self.groups.get(vn.symbol)
        if g is None:
            raise TraceError(
                f"symbol {vn.symbol!r} was not seen when the trace was specialized; "
                "re-run the model on an untyped trace and specialize again")
        if vn in g.pos:
            raise TraceError(f"duplicate variable {vn}")
        if self._ad is not None:
            raise TraceError(f"new variable {vn} appeared during gradient evaluation")
        if _is_int_value(value) != (g.dtype == np.int64):
            raise SpecializationError(vn.symbol, "element type changed")
        flat = np.ravel(np.asarray(value, dtype=g.dtype))
        start = len(g.values)
        g.values = np.concatenate([g.values, flat])
        g.pos[vn] = len(g.names)
        g.names.append(vn)
        g.dists.append(dist)
        g.ranges.append((start, start + flat.size))
        g.shapes.append(_shape(value))
        g.linked.append(False)
        g.order.append(self._n)
        self._n += 1
        g._refresh_block()
        self._plan = None

    def meta(self, vn) -> EntryMeta:
        g, i = self._locate(vn)
        return EntryMeta(g.names[i], g.dists[i], g.linked[i], g.order[i])

    def get_value(self, vn):
        g, i = self._locate(vn)
        return g.get(i)

    def set_value(self, vn, value):
        g, i = self._locate(vn)
        a, b = g.ranges[i]
        if g.shapes[i] == ():
            if np.ndim(value) != 0:
                raise TraceError(f"{g.names[i]}: expected a scalar")
        elif np.shape(value) != (b - a,):
            raise TraceError(f"{g.names[i]}: expected shape {(b - a,)}, got {np.shape(value)}")
        if g.dtype == np.int64 and not _is_int_value(value):
            raise TraceError(f"{g.names[i]}: expected an integer value")
        g.values[a:b] = np.ravel(value)

    def get_constrained(self, vn):
        g, i = self._locate(vn)
        v = g.get(i)
        if g.linked[i]:
            v = T.value_of(bijector_of(g.dists[i]).inverse(v))
        return v

    # flat views ---------------------------------------------------------------
    def _flat_plan(self):
        if self._plan is None:
            items = []
            for g in self.groups.values():
                for i, o in enumerate(g.order):
                    items.append((o, g, g.ranges[i]))
            items.sort(key=lambda t: t[0])
            plan, positions, pos = [], {s: np.zeros(len(g.values), dtype=np.int64) for s, g in self.groups.items()}, 0
            for _, g, (a, b) in items:
                plan.append((g, a, b))
                positions[g.symbol][a:b] = np.arange(pos, pos + (b - a))
                pos += b - a
            self._plan = (plan, positions, pos)
        return self._plan

    def flat_length(self):
        return self._flat_plan()[2]

    def flat_positions(self):
        """symbol -> indices into the flat vector, in buffer layout order."""
        return self._flat_plan()[1]

    def flatten(self) -> np.ndarray:
        for g in self.groups.values():
            if g.dtype != float:
                raise NotDifferentiable(f"{g.symbol!r} is discrete and cannot be flattened")
        plan = self._flat_plan()[0]
        if not plan:
            return np.zeros(0)
        return np.concatenate([g.values[a:b] for g, a, b in plan]).astype(float)

    def unflatten(self, theta) -> None:
        theta = np.asarray(theta, dtype=float)
        plan, positions, n = self._flat_plan()
        if theta.shape != (n,):
            raise TraceError(f"flat vector has length {theta.size}, trace holds {n} values")
        for g in self.groups.values():
            if g.dtype != float:
                raise NotDifferentiable(f"{g.symbol!r} is discrete and cannot be unflattened")
            g.values[:] = theta[positions[g.symbol]]

    def snapshot(self):
        return {s: g.values.copy() for s, g in self.groups.items()}

    def restore(self, snap):
        for s, v in snap.items():
            self.groups[s].values[:] = v

    def constrained_flat(self):
        items = []
        for g in self.groups.values():
            if g.block and g.linked[0]:
                b = bijector_of(g.dists[0])
                vals = np.asarray(b.inverse(g.values.astype(float)), dtype=float)
                for k, n in enumerate(g.names):
                    items.append((g.order[k], str(n), vals[k : k + 1]))
                continue
            for i, n in enumerate(g.names):
                v = g.get(i)
                if g.linked[i]:
                    v = T.value_of(bijector_of(g.dists[i]).inverse(v))
                shape = _shape(v)
                for name, x in zip(_flat_names(n, shape), np.ravel(v)):
                    items.append((g.order[i], name, np.array([x], dtype=float)))
        items.sort(key=lambda t: t[0])
        names = [name for _, name, _ in items]
        vals = np.concatenate([v for _, _, v in items]) if items else np.zeros(0)
        return names, vals

    # linking ----------------------------------------------------------------
    def _transform(self, targets, to_linked: bool):
        symbols = list(self.groups) if targets is None else list(targets)
        for s in symbols:
            if s not in self.groups:
                raise NotFound(f"no symbol {s!r} in trace")
            g = self.groups[s]
            for i, n in enumerate(g.names):
                bijector_of(g.dists[i])
                if g.linked[i] == to_linked:
                    raise StateError(f"{n} is already {'linked' if to_linked else 'unlinked'}")
        for s in symbols:
            g = self.groups[s]
            chunks, ranges, pos = [], [], 0
            for i in range(len(g.names)):
                b = bijector_of(g.dists[i])
                v = g.get(i)
                v = T.value_of(b.forward(v) if to_linked else b.inverse(v))
                flat = np.ravel(np.asarray(v, dtype=float))
                chunks.append(flat)
                ranges.append((pos, pos + flat.size))
                pos += flat.size
                g.shapes[i] = _shape(v)
                g.linked[i] = to_linked
            g.values = np.concatenate(chunks) if chunks else np.zeros(0)
            g.ranges = ranges
            g._refresh_block()
        self._plan = None

    def link(self, targets=None):
        self._transform(targets, True)

    def invlink(self, targets=None):
        self._transform(targets, False)

    @property
    def is_linked(self):
        return all(all(g.linked) for g in self.groups.values())


def specialize(t: UntypedTrace) -> TypedTrace:
    out = TypedTrace()
    by_symbol: dict[str, list[int]] = {}
    for i, m in enumerate(t.metas):
        by_symbol.setdefault(m.name.symbol, []).append(i)
    for sym, idxs in by_symbol.items():
        kinds = {_is_int_value(t.values[i]) for i in idxs}
        if len(kinds) > 1:
            raise SpecializationError(sym, "mixes integer and real values")
        dtype = np.int64 if kinds.pop() else np.float64
        g = Group(sym, dtype)
        chunks, pos = [], 0
        for i in idxs:
            m, v = t.metas[i], t.values[i]
            flat = np.ravel(np.asarray(v, dtype=dtype))
            chunks.append(flat)
            g.pos[m.name] = len(g.names)
            g.names.append(m.name)
            g.dists.append(m.dist)
            g.ranges.append((pos, pos + flat.size))
            g.shapes.append(_shape(v))
            g.linked.append(m.linked)
            g.order.append(m.order)
            pos += flat.size
        g.values = np.concatenate(chunks) if chunks else np.empty(0, dtype=dtype)
        g._refresh_block()
        out.groups[sym] = g
    out._n = len(t.metas)
    out.logp = t.logp
    return out


# functional aliases
def get_value(t, vn):
    return t.get_value(vn)


def set_value(t, vn, value):
    t.set_value(vn, value)


def link(t: TypedTrace, targets=None):
    t.link(targets)


def invlink(t: TypedTrace, targets=None):
    t.invlink(targets)


def flatten(t: TypedTrace) -> np.ndarray:
    return t.flatten()


def unflatten(t: TypedTrace, theta) -> None:
    t.unflatten(theta)


def acc_logp(t, delta):
    t.acc_logp(delta)


def reset_logp(t):
    t.reset_logp()


def get_logp(t) -> float:
    return t.get_logp()
