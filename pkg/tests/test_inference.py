import math

import numpy as np
import pytest

from traceppl import corpus
from traceppl.errors import NotDifferentiable
from traceppl.inference import (
    HmcConfig, MhConfig, MhDiagnostics, hmc_sample, leapfrog, make_rng, mh_sample,
    prior_sample, spawn_seeds, trace_kind_counts,
)

from conftest import model_from

CONJ = "model conj(y) {\n  mu ~ Normal(0, 1)\n  y .~ Normal.(mu * ones(size(y, 1)), 1)\n}"


def std_normal(theta):
    return -0.5 * float(theta @ theta), -theta


def energy(theta, p):
    return 0.5 * float(theta @ theta) + 0.5 * float(p @ p)


def test_leapfrog_energy_error_small():
    theta, p = np.array([1.0]), np.array([0.0])
    r = leapfrog(std_normal, theta, p, 0.1, 4)
    assert not r.diverged
    assert abs(energy(r.theta, r.p) - energy(theta, p)) < 1e-3


def test_leapfrog_reversible(rng):
    for _ in range(20):
        theta, p = rng.normal(size=3), rng.normal(size=3)
        fwd = leapfrog(std_normal, theta, p, 0.3, 7)
        back = leapfrog(std_normal, fwd.theta, -fwd.p, 0.3, 7)
        np.testing.assert_allclose(back.theta, theta, atol=1e-10)
        np.testing.assert_allclose(-back.p, p, atol=1e-10)


def test_leapfrog_second_order(rng):
    starts = [(rng.normal(size=2), rng.normal(size=2)) for _ in range(50)]

    def med_err(eps):
        errs = [abs(energy(*leapfrog(std_normal, th, p, eps, int(round(1.0 / eps)))[:2]) - energy(th, p))
                for th, p in starts]
        return float(np.median(errs))

    ratio = med_err(0.1) / med_err(0.05)
    assert 3.0 <= ratio <= 5.0


def test_leapfrog_divergence_stops():
    calls = []

    def f(theta):
        calls.append(1)
        return (-math.inf, None) if theta[0] > 0.5 else std_normal(theta)

    r = leapfrog(f, np.array([0.0]), np.array([3.0]), 0.25, 10)
    assert r.diverged and len(calls) < 11


def test_leapfrog_shape_mismatch():
    with pytest.raises(ValueError):
        leapfrog(std_normal, np.zeros(2), np.zeros(3), 0.1, 1)


@pytest.mark.parametrize("kw", [
    {"step_size": 0.0}, {"step_size": -1.0}, {"step_size": math.nan},
    {"step_size": 0.1, "n_leapfrog": 0}, {"step_size": 0.1, "n_iters": 0},
    {"step_size": 0.1, "seed": -1},
])
def test_hmc_config_validation(kw):
    with pytest.raises(ValueError):
        HmcConfig(**kw)


def test_mh_config_validation():
    with pytest.raises(ValueError):
        MhConfig(proposal_sd=0.0)


def test_hmc_standard_normal():
    m = model_from("model m() { x ~ Normal(0, 1) }")
    c = hmc_sample(m, HmcConfig(0.2, 4, 4000, seed=3))
    x = c.get_column("x")[:, 0]
    assert abs(x.mean()) < 0.08
    assert 0.85 <= x.std() <= 1.15
    assert c.meta["accept_rate"] > 0.9


def test_hmc_conjugate_posterior():
    y = make_rng(7).normal(1.0, 1.0, size=20)
    m = model_from(CONJ, y=y)
    c = hmc_sample(m, HmcConfig(0.2, 4, 3000, seed=11)).discard(0.1)
    mu = c.get_column("mu")[:, 0]
    assert abs(mu.mean() - y.sum() / 21) < 0.05
    assert abs(mu.std() - 1 / math.sqrt(21)) < 0.15 / math.sqrt(21)


def test_hmc_positive_parameter_stays_positive():
    m = model_from("model m(y) { s ~ Gamma(2, 1)\n y ~ Normal(0, s) }", y=1.0)
    c = hmc_sample(m, HmcConfig(0.3, 4, 500, seed=1))
    assert np.all(c.get_column("s") > 0)


def test_hmc_discrete_model_rejected():
    m = model_from("model m() { k ~ Poisson(3) }")
    with pytest.raises(NotDifferentiable):
        hmc_sample(m, HmcConfig(0.1, 4, 10))


def test_hmc_deterministic_given_seed():
    m = corpus.load("linreg")
    a = hmc_sample(m, HmcConfig(0.08, 4, 50, seed=5))
    b = hmc_sample(m, HmcConfig(0.08, 4, 50, seed=5))
    c = hmc_sample(m, HmcConfig(0.08, 4, 50, seed=6))
    assert np.array_equal(a.draws, b.draws) and np.array_equal(a.logp, b.logp)
    assert not np.array_equal(a.draws, c.draws)


def test_only_typed_evaluations_after_start():
    m = corpus.load("gauss_unknown")
    before = trace_kind_counts()
    c = hmc_sample(m, HmcConfig(0.05, 4, 20, seed=0, n_init=10))
    after = trace_kind_counts()
    assert after.get("untyped", 0) - before.get("untyped", 0) == 10
    assert after["typed"] - before.get("typed", 0) == c.meta["typed_evals"] > 0

    before = trace_kind_counts()
    mh_sample(m, MhConfig(0.1, 30, seed=0))
    after = trace_kind_counts()
    assert after.get("untyped", 0) - before.get("untyped", 0) == 1
    assert after["typed"] - before.get("typed", 0) == 31


def test_mh_guarded_unlinked_model():
    m = model_from("model m() {\n  s ~ Gamma(1, 1)\n  if s < 0 {\n    reject\n  }\n  t = s + 1\n}")
    diag = MhDiagnostics()
    c = mh_sample(m, MhConfig(1.0, 5000, seed=2, linked=False), diagnostics=diag)
    s = c.get_column("s")[:, 0]
    assert np.all(s >= 0)
    assert diag.early_rejections > 0
    assert diag.post_reject_statements == 0
    assert abs(s.mean() - 1.0) < 0.15


def test_mh_categorical_frequencies():
    p = np.array([0.2, 0.5, 0.3])
    m = model_from("model m() { k ~ Categorical([0.2, 0.5, 0.3]) }")
    c = mh_sample(m, MhConfig(n_iters=20000, seed=4))
    k = c.get_column("k")[:, 0].astype(int)
    freq = np.bincount(k, minlength=4)[1:] / k.size
    assert 0.5 * np.abs(freq - p).sum() < 0.03


def test_mh_and_hmc_agree():
    y = make_rng(9).normal(-0.5, 1.0, size=20)
    m = model_from(CONJ, y=y)
    h = hmc_sample(m, HmcConfig(0.2, 4, 3000, seed=1)).get_column("mu")
    r = mh_sample(m, MhConfig(0.4, 20000, seed=1)).discard(0.1).get_column("mu")
    assert abs(h.mean() - r.mean()) < 0.05
    assert abs(h.std() - r.std()) < 0.05


def test_mh_deterministic_given_seed():
    m = corpus.load("hier_poisson")
    a = mh_sample(m, MhConfig(0.1, 100, seed=3))
    b = mh_sample(m, MhConfig(0.1, 100, seed=3))
    assert np.array_equal(a.draws, b.draws)


def test_prior_sample_moments():
    m = model_from("model m() { s ~ Gamma(3, 2) }")
    c = prior_sample(m, 20000, seed=0)
    s = c.get_column("s")[:, 0]
    assert abs(s.mean() - 6.0) < 0.1
    assert c.meta["sampler"] == "prior"


def test_spawn_seeds_distinct_and_stable():
    a = spawn_seeds(42, 4)
    assert len(set(a)) == 4 and a == spawn_seeds(42, 4)
