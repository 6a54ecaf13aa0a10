"""Run-time addresses of random variables.

A ``VarName`` is a symbol plus a path of index groups, e.g. ``x[1,2][3]``
is ``VarName("x", ((1, 2), (3,)))``.  Indices are 1-based.  The ``All``
atom (printed ``:``) matches any index when testing subsumption.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Tuple, Union

from .errors import ParseError


class _All:
    __slots__ = ()

    def __repr__(self):
        return "All"

    def __reduce__(self):
        return "All"


All = _All()

Atom = Union[int, _All]
IndexPath = Tuple[Tuple[Atom, ...], ...]

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_SEEN_SYMBOLS: set = set()


@dataclass(frozen=True)
class VarName:
    symbol: str
    path: IndexPath = ()

    def __post_init__(self):
        if self.symbol not in _SEEN_SYMBOLS:
            if not isinstance(self.symbol, str) or not _IDENT.fullmatch(self.symbol):
                raise ValueError(f"invalid identifier {self.symbol!r}")
            _SEEN_SYMBOLS.add(self.symbol)
        path = tuple(tuple(group) for group in self.path)
        for group in path:
            if not group:
                raise ValueError("empty index group")
            for atom in group:
                if atom is All:
                    continue
                if isinstance(atom, bool) or not isinstance(atom, int):
                    raise ValueError(f"index atom must be an int or All, got {atom!r}")
                if atom < 1:
                    raise ValueError(f"indices are 1-based, got {atom}")
        object.__setattr__(self, "path", path)

    def __str__(self):
        return varname_to_string(self)

    def child(self, *group: Atom) -> "VarName":
        """Append one index group: ``VarName('w').child(2) == w[2]``."""
        return VarName(self.symbol, self.path + (tuple(group),))


def varname_to_string(v: VarName) -> str:
    return v.symbol + "".join(
        "[" + ",".join(":" if a is All else str(a) for a in group) + "]" for group in v.path
    )


def varname_parse(s: str) -> VarName:
    m = _IDENT.match(s)
    if not m:
        raise ParseError("expected identifier", 1, 1)
    symbol = m.group(0)
    pos = m.end()
    groups = []
    while pos < len(s):
        if s[pos] != "[":
            raise ParseError(f"unexpected character {s[pos]!r}", 1, pos + 1)
        close = s.find("]", pos)
        if close < 0:
            raise ParseError("unbalanced '['", 1, pos + 1)
        body = s[pos + 1 : close]
        if "[" in body:
            raise ParseError("unbalanced '['", 1, pos + 1 + body.index("["))
        group = []
        col = pos + 2
        for part in body.split(","):
            if part == ":":
                group.append(All)
            elif part.isdigit() and part.isascii():
                value = int(part)
                if value < 1:
                    raise ParseError("indices are 1-based", 1, col)
                group.append(value)
            else:
                raise ParseError(f"invalid index {part!r}", 1, col)
            col += len(part) + 1
        groups.append(tuple(group))
        pos = close + 1
    return VarName(symbol, tuple(groups))


def _group_matches(a: tuple, b: tuple) -> bool:
    # All on the container side matches anything; the reverse does not hold.
    return len(a) == len(b) and all(x is All or x == y for x, y in zip(a, b))


def subsumes(a: VarName, b: VarName) -> bool:
    """True iff ``a`` names ``b`` or a container of it."""
    if a.symbol != b.symbol or len(a.path) > len(b.path):
        return False
    return all(_group_matches(ga, gb) for ga, gb in zip(a.path, b.path))


def as_varname(v) -> VarName:
    return v if isinstance(v, VarName) else varname_parse(v)
