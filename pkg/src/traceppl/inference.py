"""Samplers: prior draws, random-walk Metropolis-Hastings and static HMC.

Both MCMC samplers start from a prior draw on an untyped trace, specialize
it once and do every later evaluation on the typed trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .autodiff import gradient_logp
from .chain import Chain
from .errors import ModelDomainError, NonFiniteLogp, NotDifferentiable
from .interpreter import DEFAULT, EvalStats, Model, evaluate, evaluation_counter
from .trace import UntypedTrace, specialize

__all__ = [
    "HmcConfig", "MhConfig", "Transition", "LeapfrogResult", "make_rng", "spawn_seeds",
    "sample_prior", "prior_sample", "leapfrog", "hmc_sample", "mh_sample",
]

_U64 = 1 << 64


def _check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed < _U64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed!r}")


def _check_positive_int(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
        raise ValueError(f"{name} must be an integer >= 1, got {v!r}")


@dataclass(frozen=True)
class HmcConfig:
    step_size: float
    n_leapfrog: int = 4
    n_iters: int = 2000
    seed: int = 0
    n_init: int = 10

    def __post_init__(self):
        if not (isinstance(self.step_size, (int, float)) and math.isfinite(self.step_size)
                and self.step_size > 0):
            raise ValueError(f"step_size must be a positive finite number, got {self.step_size!r}")
        _check_positive_int("n_leapfrog", self.n_leapfrog)
        _check_positive_int("n_iters", self.n_iters)
        _check_positive_int("n_init", self.n_init)
        _check_seed(self.seed)


@dataclass(frozen=True)
class MhConfig:
    proposal_sd: float = 0.5
    n_iters: int = 2000
    seed: int = 0
    linked: bool = True

    def __post_init__(self):
        if not (isinstance(self.proposal_sd, (int, float)) and math.isfinite(self.proposal_sd)
                and self.proposal_sd > 0):
            raise ValueError(f"proposal_sd must be a positive finite number, got {self.proposal_sd!r}")
        _check_positive_int("n_iters", self.n_iters)
        _check_seed(self.seed)


@dataclass
class Transition:
    theta: np.ndarray
    logp: float
    accepted: bool
    diverged: bool = False


class LeapfrogResult(NamedTuple):
    theta: np.ndarray
    p: np.ndarray
    logp: float
    grad: Optional[np.ndarray]
    diverged: bool


def make_rng(seed: int) -> np.random.Generator:
    _check_seed(seed)
    return np.random.Generator(np.random.PCG64(seed))


def spawn_seeds(seed: int, n: int) -> list[int]:
    """Independent 64-bit seeds for ``n`` parallel chains."""
    _check_seed(seed)
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


# -- prior ----------------------------------------------------------------------------

def sample_prior(m: Model, rng, ctx=DEFAULT):
    """One complete evaluation on a fresh untyped trace; parameters drawn from the prior."""
    t = UntypedTrace()
    lp = evaluate(m, t, ctx, rng)
    return t, lp


def prior_sample(m: Model, n_iters: int, seed: int = 0, ctx=DEFAULT) -> Chain:
    """Independent prior draws, returned as a chain."""
    _check_positive_int("n_iters", n_iters)
    rng = make_rng(seed)
    names, rows, lps = None, [], []
    for _ in range(n_iters):
        t, lp = sample_prior(m, rng, ctx)
        n, v = t.constrained_flat()
        if names is None:
            names = n
        elif n != names:
            raise NotDifferentiable("prior draws have varying structure; cannot tabulate them")
        rows.append(v)
        lps.append(lp)
    meta = {"model": m.name, "sampler": "prior", "seed": seed}
    return Chain(names, np.array(rows), np.array(lps), meta)


# -- HMC ------------------------------------------------------------------------------

def leapfrog(grad_fn: Callable, theta, p, eps: float, L: int, start=None) -> LeapfrogResult:
    """``L`` leapfrog steps of size ``eps``.

    ``grad_fn(theta)`` returns ``(logp, grad)``.  ``start`` may carry the
    already known ``(logp, grad)`` at ``theta``.  A non-finite log density or
    gradient stops the trajectory with ``diverged=True``.
    """
    theta = np.array(theta, dtype=float)
    p = np.array(p, dtype=float)
    if theta.shape != p.shape:
        raise ValueError("position and momentum must have the same shape")
    logp, grad = grad_fn(theta) if start is None else start
    if not _finite(logp, grad):
        return LeapfrogResult(theta, p, logp, grad, True)
    p = p + 0.5 * eps * grad
    for step in range(L):
        theta = theta + eps * p
        logp, grad = grad_fn(theta)
        if not _finite(logp, grad):
            return LeapfrogResult(theta, p, logp, grad, True)
        p = p + (eps if step < L - 1 else 0.5 * eps) * grad
    return LeapfrogResult(theta, p, logp, grad, False)


def _log_uniform(rng) -> float:
    u = rng.random()
    return math.log(u) if u > 0.0 else -math.inf


def _finite(logp, grad) -> bool:
    return math.isfinite(logp) and grad is not None and bool(np.all(np.isfinite(grad)))


def _typed_start(m: Model, rng, ctx, link_discrete: bool, n_init: int = 1):
    # best of n_init prior draws: a far-tail start can stall a fixed step size
    ut, best = None, -math.inf
    for _ in range(n_init):
        cand, lp = sample_prior(m, rng, ctx)
        if ut is None or lp > best:
            ut, best = cand, lp
    tt = specialize(ut)
    discrete = [s for s, g in tt.groups.items() if g.dtype.kind != "f"]
    if discrete and not link_discrete:
        raise NotDifferentiable(f"HMC needs continuous parameters; {', '.join(discrete)} is discrete")
    tt.link([s for s, g in tt.groups.items() if g.dtype.kind == "f"])
    return ut, tt


def hmc_sample(m: Model, cfg: HmcConfig, ctx=DEFAULT) -> Chain:
    rng = make_rng(cfg.seed)
    ut, tt = _typed_start(m, rng, ctx, link_discrete=False, n_init=cfg.n_init)
    typed_before = tt.n_evals

    def grad_fn(theta):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            r = gradient_logp(m, tt, ctx, theta)
        return r.logp, r.grad

    theta = tt.flatten()
    cur = grad_fn(theta)
    names, row = tt.constrained_flat()
    draws = np.empty((cfg.n_iters, len(names)))
    lps = np.empty(cfg.n_iters)
    n_accept = n_div = 0
    for it in range(cfg.n_iters):
        p0 = rng.standard_normal(theta.size)
        traj = leapfrog(grad_fn, theta, p0, cfg.step_size, cfg.n_leapfrog, start=cur)
        h0 = -cur[0] + 0.5 * p0 @ p0
        with np.errstate(over="ignore", invalid="ignore"):
            h1 = -traj.logp + 0.5 * traj.p @ traj.p
        log_u = _log_uniform(rng)
        if traj.diverged or not math.isfinite(h1):
            n_div += 1
        elif log_u < h0 - h1:
            theta, cur = traj.theta, (traj.logp, traj.grad)
            n_accept += 1
            tt.unflatten(theta)
            row = tt.constrained_flat()[1]
        draws[it] = row
        lps[it] = cur[0]
    meta = {
        "model": m.name, "sampler": "hmc", "seed": cfg.seed, "step_size": cfg.step_size,
        "n_leapfrog": cfg.n_leapfrog, "accept_rate": n_accept / cfg.n_iters,
        "divergences": n_div, "untyped_evals": cfg.n_init,
        "typed_evals": tt.n_evals - typed_before,
    }
    return Chain(names, draws, lps, meta)


# -- MH --------------------------------------------------------------------------------

@dataclass
class MhDiagnostics:
    """Instrumentation for early rejection."""

    early_rejections: int = 0
    domain_errors: int = 0
    post_reject_statements: int = 0


def mh_sample(m: Model, cfg: MhConfig, ctx=DEFAULT, diagnostics: Optional[MhDiagnostics] = None) -> Chain:
    """Random-walk Metropolis-Hastings on the typed trace.

    Continuous parameters move by Gaussian steps (in unconstrained space when
    ``cfg.linked``); integer parameters move by +1 or -1.  A ``reject`` or an
    invalid distribution parameter ends the evaluation at once and the
    proposal is rejected.
    """
    rng = make_rng(cfg.seed)
    ut, _ = sample_prior(m, rng, ctx)
    tt = specialize(ut)
    if cfg.linked:
        tt.link([s for s, g in tt.groups.items() if g.dtype.kind == "f"])
    diag = diagnostics if diagnostics is not None else MhDiagnostics()
    lp = evaluate(m, tt, ctx)
    names, row = tt.constrained_flat()
    draws = np.empty((cfg.n_iters, len(names)))
    lps = np.empty(cfg.n_iters)
    groups = list(tt.groups.values())
    n_accept = 0
    for it in range(cfg.n_iters):
        snap = tt.snapshot()
        for g in groups:
            if g.dtype.kind == "f":
                g.values += cfg.proposal_sd * rng.standard_normal(g.values.size)
            else:
                g.values += rng.integers(0, 2, size=g.values.size) * 2 - 1
        stats = EvalStats()
        try:
            lp_new = evaluate(m, tt, ctx, None, stats)
        except ModelDomainError:
            lp_new = -math.inf
            diag.domain_errors += 1
        except NonFiniteLogp:
            lp_new = -math.inf
        if stats.rejected_at is not None:
            diag.early_rejections += 1
            diag.post_reject_statements += stats.executed_after(stats.rejected_at)
        log_u = _log_uniform(rng)
        if lp_new != -math.inf and log_u < lp_new - lp:
            lp = lp_new
            n_accept += 1
            row = tt.constrained_flat()[1]
        else:
            tt.restore(snap)
        draws[it] = row
        lps[it] = lp
    meta = {
        "model": m.name, "sampler": "mh", "seed": cfg.seed, "proposal_sd": cfg.proposal_sd,
        "linked": cfg.linked, "accept_rate": n_accept / cfg.n_iters,
        "early_rejections": diag.early_rejections, "untyped_evals": ut.n_evals,
    }
    return Chain(names, draws, lps, meta)


def trace_kind_counts() -> dict:
    """Global count of evaluations per trace kind."""
    return dict(evaluation_counter)
