"""AST node types.  Spans are kept for diagnostics but ignored by equality."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

Span = Optional[Tuple[int, int]]


def _span():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True, eq=False)
class NumberLit:
    value: Union[int, float]
    span: Span = _span()

    # 1 and 1.0 are different literals: they fix the element type of a trace slot
    def __eq__(self, other):
        return (isinstance(other, NumberLit) and type(self.value) is type(other.value)
                and self.value == other.value)

    def __hash__(self):
        return hash((type(self.value), self.value))


@dataclass(frozen=True)
class MissingLit:
    span: Span = _span()


@dataclass(frozen=True)
class Ident:
    name: str
    span: Span = _span()


@dataclass(frozen=True)
class Index:
    base: "Expr"
    indices: Tuple["Expr", ...]
    span: Span = _span()


@dataclass(frozen=True)
class Transpose:
    base: "Expr"
    span: Span = _span()


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"
    span: Span = _span()


@dataclass(frozen=True)
class Binary:
    op: str
    lhs: "Expr"
    rhs: "Expr"
    span: Span = _span()


@dataclass(frozen=True)
class Call:
    name: str
    args: Tuple["Expr", ...]
    span: Span = _span()


@dataclass(frozen=True)
class BroadcastCall:
    name: str
    args: Tuple["Expr", ...]
    span: Span = _span()


@dataclass(frozen=True)
class VectorLit:
    items: Tuple["Expr", ...]
    span: Span = _span()


Expr = Union[NumberLit, MissingLit, Ident, Index, Transpose, Unary, Binary, Call,
             BroadcastCall, VectorLit]


@dataclass(frozen=True)
class LValue:
    name: str
    indices: Tuple[Expr, ...] = ()
    span: Span = _span()


@dataclass(frozen=True)
class Assign:
    target: str
    value: Expr
    span: Span = _span()


@dataclass(frozen=True)
class Tilde:
    lhs: LValue
    dist: Expr
    span: Span = _span()


@dataclass(frozen=True)
class DotTilde:
    lhs: LValue
    dist: Expr
    span: Span = _span()


@dataclass(frozen=True)
class If:
    cond: Expr
    body: Tuple["Stmt", ...]
    span: Span = _span()


@dataclass(frozen=True)
class Reject:
    span: Span = _span()


Stmt = Union[Assign, Tilde, DotTilde, If, Reject]


@dataclass(frozen=True)
class ModelDecl:
    name: str
    params: Tuple[str, ...]
    body: Tuple[Stmt, ...]
    span: Span = _span()


def walk_statements(body):
    """Pre-order traversal of statements, descending into ``if`` bodies."""
    for stmt in body:
        yield stmt
        if isinstance(stmt, If):
            yield from walk_statements(stmt.body)


def tilde_symbols(decl: ModelDecl) -> list[str]:
    """Symbols appearing on the left of ``~`` or ``.~``, in first-seen order."""
    seen = []
    for stmt in walk_statements(decl.body):
        if isinstance(stmt, (Tilde, DotTilde)) and stmt.lhs.name not in seen:
            seen.append(stmt.lhs.name)
    return seen
