from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..errors import LexError

KEYWORDS = frozenset({"model", "if", "reject", "missing"})

# longest match first
SYMBOLS = (".~", "<=", ">=", "==", "~", "=", "+", "-", "*", "/", "^", "'",
           "(", ")", "[", "]", "{", "}", ",", "<", ">", ".")

_NUMBER = re.compile(r"\d+(\.\d*)?([eE][+-]?\d+)?")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "number", "keyword", "symbol", "eof"
    text: str
    line: int
    column: int
    offset: int = field(default=0, compare=False)
    value: object = field(default=None, compare=False)

    @property
    def span(self):
        return (self.line, self.column)

    def is_(self, kind, text=None):
        return self.kind == kind and (text is None or self.text == text)

    def __repr__(self):
        return f"{self.kind}:{self.text!r}@{self.line}:{self.column}"


def lex(source: str) -> list[Token]:
    tokens = []
    i, line, col = 0, 1, 1
    n = len(source)
    while i < n:
        c = source[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue
        m = _NUMBER.match(source, i)
        if m:
            text = m.group(0)
            is_real = m.group(1) is not None or m.group(2) is not None
            value = float(text) if is_real else int(text)
            tokens.append(Token("number", text, line, col, i, value))
        else:
            m = _IDENT.match(source, i)
            if m:
                text = m.group(0)
                kind = "keyword" if text in KEYWORDS else "ident"
                tokens.append(Token(kind, text, line, col, i))
            else:
                for sym in SYMBOLS:
                    if source.startswith(sym, i):
                        tokens.append(Token("symbol", sym, line, col, i))
                        text = sym
                        break
                else:
                    raise LexError(f"illegal character {c!r}", line, col)
        i += len(text)
        col += len(text)
    tokens.append(Token("eof", "", line, col, n))
    return tokens
