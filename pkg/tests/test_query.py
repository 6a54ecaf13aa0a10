import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from traceppl import corpus
from traceppl.chain import Chain, save_csv
from traceppl.errors import ClassifyError, DimensionError, EvalError, NotFound, ParseError, PPLError
from traceppl.inference import sample_prior
from traceppl.interpreter import MISSING
from traceppl.query import (
    QueryExpr, QueryKind, Registry, classify, default_registry, evaluate_query, log_mean_exp,
    parse_query, run_query,
)

from conftest import model_from

LIK = "X = [1.0, 2.0]', y = [2.0] | w = [0.5, 0.0], s = 1.0, model = linreg"
PRIOR = "w = [1.0, 1.0]', s = 1.0 | model = linreg"
JOINT = "X = [1.0, 2.0]', y = [2.0], w = [0.0, 0.0], s = 1.0 | model = linreg"


def test_parse_likelihood_string():
    q = parse_query(LIK)
    assert list(q.lhs) == ["X", "y"] and list(q.rhs) == ["w", "s"]
    assert q.model == "linreg" and q.chain is None
    assert q.lhs["X"].shape == (1, 2)
    np.testing.assert_array_equal(q.lhs["y"], [2.0])
    np.testing.assert_array_equal(q.rhs["w"], [0.5, 0.0])
    assert q.rhs["s"] == 1.0 and isinstance(q.rhs["s"], float)


def test_parse_literals():
    q = parse_query("a = 3, b = -2.5e1, c = missing, d = [1, 2], e = [[1, 2], [3, 4]]', f = [] | model = m")
    assert q.lhs["a"] == 3 and isinstance(q.lhs["a"], int)
    assert q.lhs["b"] == -25.0
    assert q.lhs["c"] is MISSING
    assert q.lhs["d"].dtype == np.int64
    np.testing.assert_array_equal(q.lhs["e"], [[1.0, 3.0], [2.0, 4.0]])
    assert q.lhs["f"].size == 0


def test_parse_whitespace_insensitive():
    a = parse_query(LIK)
    b = parse_query("X=[1.0,2.0]',y=[2.0]|w=[0.5,0.0],s=1.0,model=linreg")
    assert list(a.lhs) == list(b.lhs)
    for k in a.lhs:
        np.testing.assert_array_equal(a.lhs[k], b.lhs[k])


def test_parse_chain_refs():
    assert parse_query("y = 1 | chain = runs/out.csv").chain == "runs/out.csv"
    assert parse_query('y = 1 | chain = "a b.csv"').chain == "a b.csv"
    assert parse_query("y = 1 | chain = chain_instance").chain == "chain_instance"


@pytest.mark.parametrize("text, col, needle", [
    ("x = 1 x = 2 | model = m", 7, "',' or '|'"),
    ("x = 1, x = 2 | model = m", 8, "duplicate"),
    ("x = 1, y = 2", 13, "',' or '|'"),
    ("x = [1, 2 | model = m", 11, "']'"),
    ("x = [1, [2]] | model = m", 5, "matrix"),
    ("x = [[1], [2, 3]] | model = m", 5, "equal length"),
    ("x = | model = m", 5, "expected a number"),
    ("model = m | x = 1", 1, "right-hand side"),
    ("x = 1 | x = 2, model = m", 9, "both sides"),
    ("x = 1 | s = 1", 7, "exactly one"),
    ("x = 1 | model = m, chain = c", 7, "exactly one"),
    ("", 1, "empty"),
    ("x = 1 | model = m extra", 19, "end of input"),
])
def test_parse_errors_are_positioned(text, col, needle):
    with pytest.raises(ParseError) as ei:
        parse_query(text)
    assert ei.value.line == 1 and ei.value.column == col
    assert needle in str(ei.value)


def test_classify_reference_queries():
    decl = corpus.decl("linreg")
    assert classify(parse_query(LIK), decl) is QueryKind.LIKELIHOOD
    assert classify(parse_query(PRIOR), decl) is QueryKind.PRIOR
    assert classify(parse_query(JOINT), decl) is QueryKind.JOINT
    pp = parse_query("X = [1.0, 1.0]', y = [2.0] | chain = chain_instance")
    assert classify(pp, decl) is QueryKind.POSTERIOR_PREDICTIVE
    assert str(QueryKind.POSTERIOR_PREDICTIVE) == "posterior_predictive"


@pytest.mark.parametrize("text, needle", [
    ("X = [1.0]', y = [2.0] | w = [0.5], model = linreg", "not bound: s"),
    ("q = 1 | model = linreg", "unknown identifier"),
    ("y = [2.0] | w = [0.5], s = 1, model = linreg", "not bound on the left-hand side: X"),
    ("w = [1.0] | s = 1, model = linreg", "match no query kind"),
    ("X = [1.0]', y = [2.0] | w = [1.0], chain = c", "unexpected right-hand side"),
    ("y = [2.0] | chain = c", "not bound: X"),
])
def test_classify_errors(text, needle):
    with pytest.raises(ClassifyError, match=needle.replace("[", r"\[")):
        classify(parse_query(text), corpus.decl("linreg"))


def test_evaluate_reference_queries_against_scipy():
    lik = stats.norm.logpdf(2.0, 0.5, 1.0)
    kind, v = run_query(LIK)
    assert kind is QueryKind.LIKELIHOOD and abs(v - lik) < 1e-10
    prior = stats.norm.logpdf([1.0, 1.0]).sum() + stats.gamma.logpdf(1.0, 1.0)
    kind, v = run_query(PRIOR)
    assert kind is QueryKind.PRIOR and abs(v - prior) < 1e-10
    joint = stats.norm.logpdf([0.0, 0.0]).sum() + stats.gamma.logpdf(1.0, 1.0) + stats.norm.logpdf(2.0, 0.0, 1.0)
    kind, v = run_query(JOINT)
    assert kind is QueryKind.JOINT and abs(v - joint) < 1e-10


def test_prior_zero_point():
    _, v = run_query("w=[0,0]', s=1 | model=linreg")
    assert v == pytest.approx(2 * -0.9189385332046727 - 1.0, abs=1e-12)


def test_partial_prior_counts_only_bound_parameters():
    _, v = run_query("s = 2.0 | model = linreg")
    assert v == pytest.approx(stats.gamma.logpdf(2.0, 1.0), abs=1e-12)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        run_query("X = [1.0, 2.0]', y = [2.0] | w = [0.5, 0.0, 1.0], s = 1.0, model = linreg")
    with pytest.raises(DimensionError):
        run_query("X = [1.0, 2.0, 3.0]', y = [2.0] | w = [0.5, 0.0], s = 1.0, model = linreg")


def test_unknown_model():
    with pytest.raises(NotFound):
        run_query("x = 1 | model = nope")


def _param_bindings(m, rng):
    t, _ = sample_prior(m, rng)
    out = {}
    for vn in t.names():
        out.setdefault(vn.symbol, []).append((vn, t.get_value(vn)))
    return {s: (np.array([v for _, v in items]) if items[0][0].path else items[0][1])
            for s, items in out.items()}


@pytest.mark.parametrize("mid", corpus.MODEL_IDS)
def test_joint_is_prior_plus_likelihood(mid, rng):
    decl = corpus.decl(mid)
    data = corpus.default_data(mid)
    reg = default_registry()
    m = corpus.load(mid)
    for _ in range(5):
        params = _param_bindings(m, rng)
        if not m.observations:
            continue
        j = evaluate_query(QueryExpr({**data, **params}, {}, mid), reg)
        p = evaluate_query(QueryExpr(dict(params), {}, mid), reg)
        lk = evaluate_query(QueryExpr(dict(data), dict(params), mid), reg)
        assert classify(QueryExpr(dict(data), dict(params), mid), decl) is QueryKind.LIKELIHOOD
        assert abs(j - (p + lk)) < 1e-10


def _pp_chain(rows):
    return Chain(["w[1]", "w[2]", "s"], np.array(rows, dtype=float), np.zeros(len(rows)), {"model": "linreg"})


def test_posterior_predictive_two_rows():
    rows = [[0.5, -0.25, 1.0], [1.5, 0.2, 0.7]]
    _, v = run_query("X = [1.0, 1.0]', y = [2.0] | chain = chain_instance",
                     chains={"chain_instance": _pp_chain(rows)})
    l = [stats.norm.logpdf(2.0, w1 + w2, s) for w1, w2, s in rows]
    assert v == pytest.approx(math.log((math.exp(l[0]) + math.exp(l[1])) / 2), abs=1e-12)


def test_posterior_predictive_identical_rows_equals_likelihood():
    rows = [[0.5, -0.25, 1.0]] * 7
    _, pp = run_query("X = [1.0, 1.0]', y = [2.0] | chain = c", chains={"c": _pp_chain(rows)})
    _, lk = run_query("X = [1.0, 1.0]', y = [2.0] | w = [0.5, -0.25], s = 1.0, model = linreg")
    assert pp == lk


def test_posterior_predictive_from_csv(tmp_path):
    p = tmp_path / "chain.csv"
    save_csv(_pp_chain([[0.5, -0.25, 1.0], [1.5, 0.2, 0.7]]), p)
    kind, v = run_query(f"X = [1.0, 1.0]', y = [2.0] | chain = {p}")
    assert kind is QueryKind.POSTERIOR_PREDICTIVE and math.isfinite(v)


def test_posterior_predictive_missing_chain():
    with pytest.raises(NotFound):
        run_query("X = [1.0, 1.0]', y = [2.0] | chain = /nonexistent/chain.csv")


def test_chain_without_model_metadata():
    c = Chain(["s"], [[1.0]], [0.0])
    with pytest.raises(ClassifyError):
        run_query("X = [1.0]', y = [2.0] | chain = c", chains={"c": c})


def test_log_mean_exp_overflow_safe():
    x = np.array([-1e4, -1e4 - 1.0, -1e4 + 0.5])
    v = log_mean_exp(x)
    assert math.isfinite(v)
    assert v == pytest.approx(-1e4 + math.log(np.mean(np.exp(x + 1e4))), abs=1e-9)
    assert log_mean_exp([-math.inf, -math.inf]) == -math.inf
    assert log_mean_exp([3.0]) == 3.0


def test_registry_with_custom_model():
    reg = Registry()
    reg.add(model_from("model coin(k) { p ~ Beta(2, 2)\n k ~ Bernoulli(p) }", k=1).decl, {"k": 1})
    assert "coin" in reg and reg.names() == ["coin"]
    _, v = run_query("k = 1 | p = 0.3, model = coin", reg)
    assert v == pytest.approx(math.log(0.3))
    _, v = run_query("p = 0.3 | model = coin", reg)
    assert v == pytest.approx(stats.beta.logpdf(0.3, 2, 2))
    assert run_query("k = 0.5 | p = 0.3, model = coin", reg)[1] == -math.inf
    reg.add(model_from("model count() { n ~ Poisson(3) }").decl)
    with pytest.raises(EvalError, match="integer"):
        run_query("n = 1.5 | model = count", reg)


_ident = st.sampled_from(["X", "y", "w", "s", "a_1", "model", "chain", "missing", "z"])
_num = st.one_of(st.integers(-1000, 1000).map(str), st.floats(-1e6, 1e6, allow_nan=False).map(repr))
_vec = st.lists(_num, max_size=4).map(lambda xs: "[" + ", ".join(xs) + "]")
_lit = st.one_of(_num, _vec, _vec.map(lambda v: v + "'"), st.just("missing"))
_binding = st.tuples(_ident, _lit).map(lambda t: f"{t[0]} = {t[1]}")
_side = st.lists(_binding, min_size=1, max_size=4).map(", ".join)


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="Xyws=|,[]'.0123456789e-+ mode_lchain\"", max_size=40))
def test_fuzz_random_text_never_crashes(text):
    try:
        parse_query(text)
    except ParseError as exc:
        assert exc.line == 1 and 1 <= exc.column <= len(text) + 1


@settings(max_examples=300, deadline=None)
@given(_side, _side)
def test_fuzz_structured_queries(lhs, rhs):
    try:
        q = parse_query(f"{lhs} | {rhs}, model = linreg")
    except ParseError as exc:
        assert exc.column >= 1
        return
    try:
        run_query(f"{lhs} | {rhs}, model = linreg")
    except PPLError:
        pass
    assert q.model == "linreg"
