"""Recursive-descent parser for the model language.

Grammar (whitespace-insensitive, ``#`` starts a line comment)::

    file      := model+
    model     := "model" IDENT "(" [IDENT ("," IDENT)*] ")" block
    block     := "{" stmt* "}"
    stmt      := IDENT "=" expr | lvalue "~" expr | lvalue ".~" expr
               | "if" expr block | "reject"
    lvalue    := IDENT ("[" expr ("," expr)* "]")?
    expr      := cmp
    cmp       := add (("<"|">"|"<="|">="|"==") add)?
    add       := mul (("+"|"-") mul)*
    mul       := unary (("*"|"/") unary)*
    unary     := "-" unary | power
    power     := postfix ("^" unary)?
    postfix   := primary ("'" | "[" expr ("," expr)* "]")*
    primary   := NUMBER | "missing" | IDENT | IDENT "(" args ")"
               | IDENT "." "(" args ")" | "(" expr ")" | "[" expr ("," expr)* "]"
"""

from __future__ import annotations

from ..distributions import DISTRIBUTIONS
from ..errors import ParseError
from . import ast as A
from .lexer import Token, lex

BUILTINS = frozenset({"logistic", "exp", "log", "sqrt", "size", "zeros", "ones", "sum"})
DISTRIBUTION_NAMES = frozenset(DISTRIBUTIONS)
CALLABLES = BUILTINS | DISTRIBUTION_NAMES
COMPARISONS = ("<", ">", "<=", ">=", "==")


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k=1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.column)

    def _describe(self, tok):
        return "end of input" if tok.kind == "eof" else repr(tok.text)

    def expect(self, kind, text=None) -> Token:
        if not self.tok.is_(kind, text):
            want = repr(text) if text else kind
            raise self.error(f"expected {want}, found {self._describe(self.tok)}")
        return self.advance()

    def accept(self, kind, text=None):
        if self.tok.is_(kind, text):
            return self.advance()
        return None

    def ident(self, what="identifier") -> Token:
        tok = self.tok
        if tok.kind != "ident":
            raise self.error(f"expected {what}, found {self._describe(tok)}")
        if tok.text in CALLABLES:
            raise self.error(f"{tok.text!r} is reserved and cannot name a variable")
        return self.advance()

    # -- declarations -----------------------------------------------------------
    def file(self) -> list[A.ModelDecl]:
        models = [self.model()]
        while not self.tok.is_("eof"):
            models.append(self.model())
        seen = set()
        for m in models:
            if m.name in seen:
                raise ParseError(f"duplicate model name {m.name!r}", *m.span)
            seen.add(m.name)
        return models

    def model(self) -> A.ModelDecl:
        start = self.expect("keyword", "model")
        name = self.ident("model name").text
        self.expect("symbol", "(")
        params = []
        if not self.tok.is_("symbol", ")"):
            while True:
                p = self.ident("parameter name")
                if p.text in params:
                    raise self.error(f"duplicate parameter {p.text!r}", p)
                params.append(p.text)
                if not self.accept("symbol", ","):
                    break
        self.expect("symbol", ")")
        body = self.block()
        return A.ModelDecl(name, tuple(params), body, start.span)

    def block(self):
        self.expect("symbol", "{")
        body = []
        while not self.tok.is_("symbol", "}"):
            if self.tok.is_("eof"):
                raise self.error("expected '}', found end of input")
            body.append(self.stmt())
        self.advance()
        return tuple(body)

    def stmt(self):
        tok = self.tok
        if tok.is_("keyword", "if"):
            self.advance()
            cond = self.expr()
            return A.If(cond, self.block(), tok.span)
        if tok.is_("keyword", "reject"):
            self.advance()
            return A.Reject(tok.span)
        if tok.kind == "ident" and self.peek().is_("symbol", "="):
            name = self.ident().text
            self.advance()
            return A.Assign(name, self.expr(), tok.span)
        if tok.kind != "ident":
            raise self.error(f"expected a statement, found {self._describe(tok)}")
        lhs = self.lvalue()
        op = self.tok
        if op.is_("symbol", "~"):
            cls = A.Tilde
        elif op.is_("symbol", ".~"):
            cls = A.DotTilde
        else:
            raise self.error(f"expected '~', '.~' or '=', found {self._describe(op)}")
        self.advance()
        rhs_tok = self.tok
        dist = self.expr()
        if not (isinstance(dist, (A.Call, A.BroadcastCall)) and dist.name in DISTRIBUTION_NAMES):
            raise self.error("tilde right-hand side must be a distribution", rhs_tok)
        return cls(lhs, dist, tok.span)

    def lvalue(self):
        tok = self.ident()
        indices = ()
        if self.accept("symbol", "["):
            indices = self.expr_list("]")
        return A.LValue(tok.text, indices, tok.span)

    def expr_list(self, close):
        items = [self.expr()]
        while self.accept("symbol", ","):
            items.append(self.expr())
        self.expect("symbol", close)
        return tuple(items)

    # -- expressions ------------------------------------------------------------
    def expr(self):
        return self.cmp()

    def cmp(self):
        lhs = self.add()
        tok = self.tok
        if tok.kind == "symbol" and tok.text in COMPARISONS:
            self.advance()
            return A.Binary(tok.text, lhs, self.add(), tok.span)
        return lhs

    def add(self):
        lhs = self.mul()
        while self.tok.kind == "symbol" and self.tok.text in ("+", "-"):
            op = self.advance()
            lhs = A.Binary(op.text, lhs, self.mul(), op.span)
        return lhs

    def mul(self):
        lhs = self.unary()
        while self.tok.kind == "symbol" and self.tok.text in ("*", "/"):
            op = self.advance()
            lhs = A.Binary(op.text, lhs, self.unary(), op.span)
        return lhs

    def unary(self):
        if self.tok.is_("symbol", "-"):
            op = self.advance()
            return A.Unary("-", self.unary(), op.span)
        return self.power()

    def power(self):
        base = self.postfix()
        if self.tok.is_("symbol", "^"):
            op = self.advance()
            return A.Binary("^", base, self.unary(), op.span)
        return base

    def postfix(self):
        e = self.primary()
        while True:
            tok = self.tok
            if tok.is_("symbol", "'"):
                self.advance()
                e = A.Transpose(e, tok.span)
            elif tok.is_("symbol", "["):
                self.advance()
                e = A.Index(e, self.expr_list("]"), tok.span)
            else:
                return e

    def primary(self):
        tok = self.tok
        if tok.kind == "number":
            self.advance()
            return A.NumberLit(tok.value, tok.span)
        if tok.is_("keyword", "missing"):
            self.advance()
            return A.MissingLit(tok.span)
        if tok.is_("symbol", "("):
            self.advance()
            e = self.expr()
            self.expect("symbol", ")")
            return e
        if tok.is_("symbol", "["):
            self.advance()
            return A.VectorLit(self.expr_list("]"), tok.span)
        if tok.kind == "ident":
            nxt = self.peek()
            if nxt.is_("symbol", "("):
                return self.call(A.Call)
            if nxt.is_("symbol", ".") and self.peek(2).is_("symbol", "("):
                return self.call(A.BroadcastCall)
            return A.Ident(self.ident().text, tok.span)
        raise self.error(f"expected an expression, found {self._describe(tok)}")

    def call(self, cls):
        tok = self.advance()
        if tok.text not in CALLABLES:
            raise self.error(f"unknown function {tok.text!r}", tok)
        if cls is A.BroadcastCall:
            self.advance()
        self.expect("symbol", "(")
        args = ()
        if not self.accept("symbol", ")"):
            args = self.expr_list(")")
        return cls(tok.text, args, tok.span)


def parse_file(source: str) -> list[A.ModelDecl]:
    return _Parser(lex(source)).file()


def parse_model(source_or_tokens) -> A.ModelDecl:
    """Parse exactly one model from source text or a token list."""
    tokens = lex(source_or_tokens) if isinstance(source_or_tokens, str) else source_or_tokens
    p = _Parser(tokens)
    m = p.model()
    p.expect("eof")
    return m


def parse_expr(source: str):
    p = _Parser(lex(source))
    e = p.expr()
    p.expect("eof")
    return e
