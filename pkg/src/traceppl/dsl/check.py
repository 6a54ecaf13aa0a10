"""Static checks run after parsing: every referenced name must be defined somewhere."""

from __future__ import annotations

from . import ast as A
from ..errors import ParseError


def _expr_idents(e):
    if isinstance(e, A.Ident):
        yield e
    elif isinstance(e, A.Index):
        yield from _expr_idents(e.base)
        for i in e.indices:
            yield from _expr_idents(i)
    elif isinstance(e, (A.Transpose,)):
        yield from _expr_idents(e.base)
    elif isinstance(e, A.Unary):
        yield from _expr_idents(e.operand)
    elif isinstance(e, A.Binary):
        yield from _expr_idents(e.lhs)
        yield from _expr_idents(e.rhs)
    elif isinstance(e, (A.Call, A.BroadcastCall)):
        for a in e.args:
            yield from _expr_idents(a)
    elif isinstance(e, A.VectorLit):
        for a in e.items:
            yield from _expr_idents(a)


def _stmt_exprs(s):
    if isinstance(s, A.Assign):
        yield s.value
    elif isinstance(s, (A.Tilde, A.DotTilde)):
        yield from s.lhs.indices
        yield s.dist
    elif isinstance(s, A.If):
        yield s.cond


def check_model(decl: A.ModelDecl) -> list[ParseError]:
    """Diagnostics for names that are never bound in ``decl``."""
    defined = set(decl.params)
    for s in A.walk_statements(decl.body):
        if isinstance(s, A.Assign):
            defined.add(s.target)
        elif isinstance(s, (A.Tilde, A.DotTilde)):
            defined.add(s.lhs.name)
    problems, seen = [], set()
    for s in A.walk_statements(decl.body):
        for e in _stmt_exprs(s):
            for ident in _expr_idents(e):
                if ident.name not in defined and ident.name not in seen:
                    seen.add(ident.name)
                    line, col = ident.span or (None, None)
                    problems.append(ParseError(
                        f"undefined variable '{ident.name}' in model {decl.name}", line, col))
    return problems
