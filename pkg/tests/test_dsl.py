import random

import pytest
from hypothesis import given, settings, strategies as st

from astgen import height, random_model
from traceppl import corpus
from traceppl.dsl import ast as A, format_expr, lex, parse_expr, parse_file, parse_model, pretty_print
from traceppl.dsl.check import check_model
from traceppl.errors import LexError, ParseError


def kinds(src):
    return [(t.kind, t.text) for t in lex(src)]


def test_lex_tilde_statement():
    assert kinds("x ~ Normal(0, 1.5)") == [
        ("ident", "x"), ("symbol", "~"), ("ident", "Normal"), ("symbol", "("),
        ("number", "0"), ("symbol", ","), ("number", "1.5"), ("symbol", ")"), ("eof", ""),
    ]


def test_lex_longest_match_and_comments():
    toks = kinds("y .~ a <= b # trailing\n== c'")
    assert ("symbol", ".~") in toks and ("symbol", "<=") in toks and ("symbol", "==") in toks
    assert ("symbol", "'") in toks
    assert all(t[1] != "trailing" for t in toks)


def test_lex_keywords_and_number_values():
    toks = lex("model if reject missing 3 3.0 1e-3")
    assert [t.kind for t in toks[:4]] == ["keyword"] * 4
    vals = [t.value for t in toks if t.kind == "number"]
    assert vals == [3, 3.0, 1e-3]
    assert type(vals[0]) is int and type(vals[1]) is float


def test_lex_positions():
    toks = lex("a\n  bb ~ c")
    assert toks[1].span == (2, 3)
    assert toks[2].span == (2, 6)


def test_lex_error_position():
    with pytest.raises(LexError) as ei:
        lex("a = 1\nb @ c")
    assert (ei.value.line, ei.value.column) == (2, 3)
    assert "@" in str(ei.value)


def test_parse_linreg():
    m = corpus.decl("linreg")
    assert m.name == "linreg" and m.params == ("X", "y")
    assert isinstance(m.body[0], A.Assign) and m.body[0].target == "d"
    w = m.body[1]
    assert isinstance(w, A.Tilde) and w.lhs == A.LValue("w", ())
    assert w.dist == A.Call("MvNormal", (A.Call("zeros", (A.Ident("d"),)), A.NumberLit(1)))
    y = m.body[3]
    assert isinstance(y, A.DotTilde)
    assert y.dist == A.BroadcastCall("Normal", (
        A.Binary("*", A.Ident("X"), A.Ident("w")), A.Ident("s")))


def test_tilde_rhs_must_be_distribution():
    with pytest.raises(ParseError) as ei:
        parse_model("model m() { x ~ 3 }")
    assert "distribution" in str(ei.value)
    assert (ei.value.line, ei.value.column) == (1, 17)


@pytest.mark.parametrize("src", [
    "model m( { }",
    "model m() { x = }",
    "model m() { if x { reject }",
    "model m() { exp = 1 }",
    "model m() { a < b < c }",
    "model m() { x ~ exp(1) }",
    "model m() { v = [] }",
])
def test_parse_errors_have_positions(src):
    with pytest.raises(ParseError) as ei:
        parse_model(src)
    assert ei.value.line == 1 and ei.value.column >= 1


def test_precedence():
    assert parse_expr("-a^b") == A.Unary("-", A.Binary("^", A.Ident("a"), A.Ident("b")))
    assert parse_expr("a - b - c") == A.Binary("-", A.Binary("-", A.Ident("a"), A.Ident("b")), A.Ident("c"))
    assert parse_expr("a + b * c") == A.Binary("+", A.Ident("a"), A.Binary("*", A.Ident("b"), A.Ident("c")))
    assert parse_expr("x[1]'") == A.Transpose(A.Index(A.Ident("x"), (A.NumberLit(1),)))
    assert parse_expr("1") != parse_expr("1.0")


@pytest.mark.parametrize("mid", corpus.MODEL_IDS)
def test_corpus_round_trip(mid):
    m = corpus.decl(mid)
    text = pretty_print(m)
    assert parse_model(text) == m
    assert pretty_print(parse_model(text)) == text


def test_printer_nested_if_indentation():
    m = parse_model("model m(a) { if a > 0 { if a > 1 { reject } } y .~ Normal.(a, 1) }")
    assert pretty_print(m) == (
        "model m(a) {\n"
        "  if a > 0 {\n"
        "    if a > 1 {\n"
        "      reject\n"
        "    }\n"
        "  }\n"
        "  y .~ Normal.(a, 1)\n"
        "}\n"
    )


def test_printer_expressions():
    assert format_expr(parse_expr("exp.(a * 1)")) == "exp.(a * 1)"
    assert format_expr(A.Binary("*", A.Binary("+", A.Ident("a"), A.Ident("b")), A.Ident("c"))) == "(a + b) * c"
    assert format_expr(A.Binary("-", A.Ident("a"), A.Binary("-", A.Ident("b"), A.Ident("c")))) == "a - (b - c)"
    assert format_expr(A.Binary("^", A.Unary("-", A.Ident("a")), A.NumberLit(2))) == "(-a)^2"
    assert format_expr(A.NumberLit(2.0)) == "2.0"


def test_parse_file_multiple_models():
    decls = parse_file("model a() { x ~ Normal(0, 1) }\n# comment\nmodel b(y) { y ~ Normal(0, 1) }\n")
    assert [d.name for d in decls] == ["a", "b"]


def _spans(node):
    if isinstance(node, tuple):
        for n in node:
            yield from _spans(n)
        return
    if not hasattr(node, "__dataclass_fields__"):
        return
    if getattr(node, "span", None) is not None:
        yield node.span
    for f in node.__dataclass_fields__:
        if f != "span":
            yield from _spans(getattr(node, f))


@pytest.mark.parametrize("mid", corpus.MODEL_IDS)
def test_spans_inside_source(mid):
    src = corpus.source(mid)
    lines = src.split("\n")
    spans = list(_spans(parse_model(src).body))
    assert spans
    for line, col in spans:
        assert 1 <= line <= len(lines)
        assert 1 <= col <= len(lines[line - 1])


def test_check_reports_undefined_name():
    problems = check_model(parse_model("model m() {\n  x ~ Normal(mu, 1)\n}"))
    assert len(problems) == 1
    assert "undefined variable 'mu'" in str(problems[0]) and problems[0].line == 2
    assert check_model(corpus.decl("hier_poisson")) == []


def test_random_ast_round_trip_bulk():
    for seed in range(300):
        m = random_model(random.Random(seed))
        assert height(m) <= 5
        assert parse_model(pretty_print(m)) == m


@settings(max_examples=200, deadline=None)
@given(st.randoms(use_true_random=False))
def test_random_ast_round_trip_property(rnd):
    m = random_model(rnd)
    text = pretty_print(m)
    assert parse_model(text) == m
    assert pretty_print(parse_model(text)) == text
