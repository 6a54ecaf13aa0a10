from __future__ import annotations

from . import ast as A

# binding strength of each expression form; higher binds tighter
_CMP, _ADD, _MUL, _UNARY, _POW, _POSTFIX, _ATOM = range(1, 8)
_BINARY = {"<": _CMP, ">": _CMP, "<=": _CMP, ">=": _CMP, "==": _CMP,
           "+": _ADD, "-": _ADD, "*": _MUL, "/": _MUL}


def _number(v) -> str:
    return str(v) if isinstance(v, int) else repr(float(v))


def _wrap(e, minimum: int) -> str:
    text, level = _fmt(e)
    return f"({text})" if level < minimum else text


def _args(items) -> str:
    return ", ".join(_fmt(a)[0] for a in items)


def _fmt(e):
    if isinstance(e, A.NumberLit):
        return _number(e.value), _ATOM
    if isinstance(e, A.MissingLit):
        return "missing", _ATOM
    if isinstance(e, A.Ident):
        return e.name, _ATOM
    if isinstance(e, A.Call):
        return f"{e.name}({_args(e.args)})", _ATOM
    if isinstance(e, A.BroadcastCall):
        return f"{e.name}.({_args(e.args)})", _ATOM
    if isinstance(e, A.VectorLit):
        return f"[{_args(e.items)}]", _ATOM
    if isinstance(e, A.Index):
        return f"{_wrap(e.base, _POSTFIX)}[{_args(e.indices)}]", _POSTFIX
    if isinstance(e, A.Transpose):
        return f"{_wrap(e.base, _POSTFIX)}'", _POSTFIX
    if isinstance(e, A.Unary):
        return f"-{_wrap(e.operand, _UNARY)}", _UNARY
    if isinstance(e, A.Binary):
        if e.op == "^":
            return f"{_wrap(e.lhs, _POSTFIX)}^{_wrap(e.rhs, _UNARY)}", _POW
        level = _BINARY[e.op]
        return f"{_wrap(e.lhs, max(level, _ADD))} {e.op} {_wrap(e.rhs, level + 1)}", level
    raise TypeError(f"not an expression: {e!r}")


def format_expr(e) -> str:
    return _fmt(e)[0]


def _lvalue(lv: A.LValue) -> str:
    return lv.name + (f"[{_args(lv.indices)}]" if lv.indices else "")


def _stmts(body, depth: int, out: list):
    pad = "  " * depth
    for s in body:
        if isinstance(s, A.Assign):
            out.append(f"{pad}{s.target} = {format_expr(s.value)}")
        elif isinstance(s, A.Tilde):
            out.append(f"{pad}{_lvalue(s.lhs)} ~ {format_expr(s.dist)}")
        elif isinstance(s, A.DotTilde):
            out.append(f"{pad}{_lvalue(s.lhs)} .~ {format_expr(s.dist)}")
        elif isinstance(s, A.Reject):
            out.append(f"{pad}reject")
        elif isinstance(s, A.If):
            out.append(f"{pad}if {format_expr(s.cond)} {{")
            _stmts(s.body, depth + 1, out)
            out.append(f"{pad}}}")
        else:
            raise TypeError(f"not a statement: {s!r}")


def pretty_print(m: A.ModelDecl) -> str:
    lines = [f"model {m.name}({', '.join(m.params)}) {{"]
    _stmts(m.body, 1, lines)
    lines.append("}")
    return "\n".join(lines) + "\n"
