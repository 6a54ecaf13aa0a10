"""Gradients of the unconstrained log joint.

``gradient_logp`` runs the model once with the flat parameter vector on a
tape (forward sweep) and then walks the tape backwards once (reverse sweep).
``finite_diff_gradient`` is the independent central-difference oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tape as T
from .errors import ModelDomainError, NonFiniteLogp, NotDifferentiable, PPLError, StateError
from .interpreter import DEFAULT, _run, evaluate
from .trace import TypedTrace

__all__ = ["GradientResult", "gradient_logp", "finite_diff_gradient"]


@dataclass
class GradientResult:
    logp: float
    grad: Optional[np.ndarray]
    tape: Optional[T.Tape] = None


def _require_differentiable(t: TypedTrace):
    if not isinstance(t, TypedTrace):
        raise TypeError("gradients need a TypedTrace; specialize the trace first")
    for g in t.groups.values():
        if g.dtype.kind != "f":
            raise NotDifferentiable(f"parameter {g.symbol!r} is discrete")
        if not all(g.linked):
            raise StateError(f"parameter {g.symbol!r} is not linked; link the trace first")


def gradient_logp(m, t: TypedTrace, ctx=DEFAULT, theta=None, stats=None) -> GradientResult:
    """Log density and its gradient at ``theta`` (default: the trace's current values).

    The trace holds ``theta`` afterwards.  A model-domain error or rejection
    yields ``logp == -inf`` and no gradient; a NaN log density (overflow far
    out in the tails) yields ``logp == nan`` and no gradient.
    """
    _require_differentiable(t)
    if theta is None:
        theta = t.flatten()
    theta = np.asarray(theta, dtype=float)
    t.unflatten(theta)

    tape = T.Tape()
    tape.forward_sweeps += 1
    x = tape.input(theta)
    positions = t.flat_positions()
    t._ad = {s: T.index(x, positions[s]) for s in t.groups}
    try:
        out = _run(m, t, ctx, None, stats)
    except ModelDomainError:
        t.logp = -math.inf
        return GradientResult(-math.inf, None, tape)
    except NonFiniteLogp:
        t.logp = math.nan
        return GradientResult(math.nan, None, tape)
    finally:
        t._ad = None
    logp = float(T.value_of(out))
    t.logp = logp
    if logp == -math.inf:
        return GradientResult(logp, None, tape)
    with np.errstate(over="ignore", invalid="ignore"):
        grad = tape.gradient(out, x)
    return GradientResult(logp, grad, tape)


def finite_diff_gradient(m, t: TypedTrace, ctx=DEFAULT, theta=None, h: float = 1e-5) -> np.ndarray:
    """Central differences of the log density along each coordinate of ``theta``."""
    if theta is None:
        theta = t.flatten()
    theta = np.array(theta, dtype=float)
    grad = np.empty_like(theta)
    try:
        for i in range(theta.size):
            vals = []
            for step in (h, -h):
                probe = theta.copy()
                probe[i] += step
                t.unflatten(probe)
                try:
                    lp = evaluate(m, t, ctx)
                except ModelDomainError:
                    lp = -math.inf
                if not math.isfinite(lp):
                    raise PPLError(
                        f"log density is {lp} at a stencil point of coordinate {i}; "
                        "choose an interior point")
                vals.append(lp)
            grad[i] = (vals[0] - vals[1]) / (2.0 * h)
    finally:
        t.unflatten(theta)
    return grad


def central_difference(f, theta, h: float = 1e-5) -> np.ndarray:
    """Central differences of a plain function ``f: R^n -> R``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    grad = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        hi, lo = f(theta + e), f(theta - e)
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise PPLError(f"non-finite value at a stencil point of coordinate {i}")
        grad[i] = (hi - lo) / (2.0 * h)
    return grad
