import math

import numpy as np
import pytest

from traceppl import corpus
from traceppl.addressing import VarName, varname_parse
from traceppl.distributions import Bernoulli, Gamma, Normal
from traceppl.errors import (
    NotDifferentiable, NotFound, SpecializationError, StateError, TraceError,
)
from traceppl.inference import sample_prior
from traceppl.interpreter import evaluate
from traceppl.trace import TypedTrace, UntypedTrace, specialize

from conftest import model_from, small_linreg


def _hand_trace():
    t = UntypedTrace()
    t.push(varname_parse("w[1]"), 1.0, Normal(0, 1))
    t.push(varname_parse("w[2]"), 2.0, Normal(0, 1))
    t.push(varname_parse("s"), 0.5, Gamma(1, 1))
    t.acc_logp(-3.25)
    return t


def test_specialize_groups_by_symbol():
    ut = _hand_trace()
    tt = specialize(ut)
    assert set(tt.groups) == {"w", "s"}
    assert tt.groups["w"].names == [varname_parse("w[1]"), varname_parse("w[2]")]
    assert tt.groups["w"].values.dtype == np.float64
    assert tt.get_logp() == -3.25
    for vn in ut.names():
        assert tt.get_value(vn) == ut.get_value(vn)
        assert tt.meta(vn).order == ut.meta(vn).order


def test_specialize_randomized_trace_preserves_values(rng):
    m = corpus.load("hier_poisson")
    ut, _ = sample_prior(m, rng)
    tt = specialize(ut)
    assert sorted(o for g in tt.groups.values() for o in g.order) == list(range(len(ut)))
    for vn in ut.names():
        np.testing.assert_array_equal(tt.get_value(vn), ut.get_value(vn))
    for g in tt.groups.values():
        covered = sorted(g.ranges)
        assert covered[0][0] == 0 and covered[-1][1] == len(g.values)
        assert all(a[1] == b[0] for a, b in zip(covered, covered[1:]))


def test_specialize_empty_trace():
    ut = UntypedTrace()
    ut.acc_logp(-1.0)
    tt = specialize(ut)
    assert len(tt) == 0 and tt.get_logp() == -1.0


def test_specialize_mixed_types_names_symbol():
    ut = UntypedTrace()
    ut.push(VarName("z"), 1, Bernoulli(0.5))
    ut.push(varname_parse("z[2]"), 0.5, Normal(0, 1))
    with pytest.raises(SpecializationError) as ei:
        specialize(ut)
    assert ei.value.symbol == "z"


@pytest.mark.parametrize("kind", ["untyped", "typed"])
def test_get_set(kind):
    t = _hand_trace()
    if kind == "typed":
        t = specialize(t)
    t.set_value("s", 2.0)
    assert t.get_value("s") == 2.0
    with pytest.raises(NotFound):
        t.get_value("nope")
    with pytest.raises(TraceError):
        t.set_value("w[1]", np.zeros(3))


def test_link_invlink():
    tt = specialize(_hand_trace())
    tt.set_value("s", 2.0)
    tt.link({"s"})
    assert tt.get_value("s") == pytest.approx(math.log(2.0))
    assert tt.meta("s").linked
    with pytest.raises(StateError):
        tt.link({"s"})
    tt.invlink({"s"})
    assert tt.get_value("s") == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(StateError):
        tt.invlink({"s"})


def test_link_round_trip_on_model(rng):
    m = corpus.load("gauss_unknown")
    tt = specialize(sample_prior(m, rng)[0])
    before = {str(v): tt.get_value(v) for v in tt.names()}
    tt.link()
    tt.invlink()
    for k, v in before.items():
        assert tt.get_value(k) == pytest.approx(v, abs=1e-12)


def test_link_discrete_is_not_differentiable():
    ut = UntypedTrace()
    ut.push(VarName("b"), 1, Bernoulli(0.3))
    tt = specialize(ut)
    with pytest.raises(NotDifferentiable):
        tt.link({"b"})
    with pytest.raises(NotDifferentiable):
        tt.flatten()


def test_flatten_order_and_round_trip(rng):
    tt = specialize(_hand_trace())
    np.testing.assert_array_equal(tt.flatten(), [1.0, 2.0, 0.5])
    theta = rng.normal(size=3)
    tt.unflatten(theta)
    np.testing.assert_array_equal(tt.flatten(), theta)
    with pytest.raises(TraceError):
        tt.unflatten(np.zeros(2))


def test_flatten_follows_global_order():
    ut = UntypedTrace()
    ut.push(varname_parse("a[1]"), 1.0, Normal(0, 1))
    ut.push(VarName("b"), 2.0, Normal(0, 1))
    ut.push(varname_parse("a[2]"), 3.0, Normal(0, 1))
    np.testing.assert_array_equal(specialize(ut).flatten(), [1.0, 2.0, 3.0])


@pytest.mark.parametrize("cls", [UntypedTrace, TypedTrace])
def test_accumulator(cls):
    t = cls()
    t.reset_logp()
    t.acc_logp(1.5)
    t.acc_logp(-0.5)
    assert t.get_logp() == 1.0
    t.acc_logp(-math.inf)
    t.acc_logp(3.0)
    assert t.get_logp() == -math.inf
    with pytest.raises(TraceError):
        t.acc_logp(float("nan"))


def test_typed_buffer_extends_within_known_symbol():
    src = """model grow(n) {
  x .~ Normal.(zeros(n), 1)
}"""
    m3 = model_from(src, n=3)
    ut = UntypedTrace()
    evaluate(m3, ut, rng=np.random.default_rng(0))
    tt = specialize(ut)
    m5 = m3.with_data(n=5)
    evaluate(m5, tt, rng=np.random.default_rng(1))
    assert len(tt.groups["x"].values) == 5 and len(tt) == 5


def test_new_symbol_requires_respecialization():
    src = """model branch(flag) {
  a ~ Normal(0, 1)
  if flag > 0 {
    b ~ Normal(0, 1)
  }
}"""
    m = model_from(src, flag=0)
    ut = UntypedTrace()
    evaluate(m, ut, rng=np.random.default_rng(0))
    tt = specialize(ut)
    with pytest.raises(TraceError, match="specialize"):
        evaluate(m.with_data(flag=1), tt, rng=np.random.default_rng(0))


def test_snapshot_restore(rng):
    tt = specialize(sample_prior(small_linreg(), rng)[0])
    snap = tt.snapshot()
    before = tt.flatten()
    tt.unflatten(before + 1.0)
    tt.restore(snap)
    np.testing.assert_array_equal(tt.flatten(), before)
