"""Distributions and bijectors used by the model language.

Univariate families accept array-valued parameters, in which case they act
as a product of independent elements (this is what ``Normal.(mu, s)``
evaluates to).  ``logpdf`` always returns the summed log-density.

All arithmetic goes through :mod:`traceppl.tape`, so parameters and values
may be tape nodes during gradient evaluation.
"""

from __future__ import annotations

import math

import numpy as np

from . import tape as T
from .errors import DimensionError, ModelDomainError, NotDifferentiable

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
NEG_INF = -math.inf

__all__ = [
    "Distribution", "Normal", "MvNormalIso", "Gamma", "Beta", "Bernoulli", "Poisson",
    "Categorical", "Dirichlet", "DISTRIBUTIONS", "make_distribution", "logpdf", "sample",
    "Bijector", "Identity", "Log", "Logit", "StickBreaking", "bijector_of", "bijector_apply",
]


def _raw(x):
    v = x.value if isinstance(x, T.Node) else x
    if type(v) is float or type(v) is int:
        return v
    return np.asarray(v)


def _check(cond, msg):
    if cond is True or (cond is not False and np.all(cond)):
        return
    raise ModelDomainError(msg)


def _finite(*params):
    for p in params:
        v = _raw(p)
        ok = math.isfinite(v) if type(v) is float or type(v) is int else np.all(np.isfinite(v))
        if not ok:
            raise ModelDomainError("distribution parameter is not finite")


class Distribution:
    name = "Distribution"
    discrete = False
    multivariate = False
    params: tuple = ()

    def __repr__(self):
        args = ", ".join(repr(T.value_of(p)) for p in self.params)
        return f"{self.name}({args})"

    def __eq__(self, other):
        if type(self) is not type(other):
            return NotImplemented
        return all(
            np.array_equal(_raw(a), _raw(b)) for a, b in zip(self.params, other.params)
        )

    __hash__ = None

    @property
    def size(self) -> int:
        """Number of independent elements (1 for scalar or multivariate)."""
        if self.multivariate:
            return 1
        return int(np.prod(np.broadcast_shapes(*(np.shape(_raw(p)) for p in self.params))))

    @property
    def batched(self) -> bool:
        return not self.multivariate and any(np.ndim(_raw(p)) > 0 for p in self.params)

    def element(self, i: int) -> "Distribution":
        """The i-th (0-based) scalar factor of a batched distribution."""
        cols = self.__dict__.get("_columns")
        if cols is None:
            cols = []
            for p in self.params:
                if np.ndim(_raw(p)) == 0:
                    cols.append(None)
                elif T.is_node(p):
                    cols.append(p)
                else:
                    cols.append(np.asarray(p).tolist())
            self._columns = cols
        picked = []
        for p, col in zip(self.params, cols):
            if col is None:
                picked.append(p)
            elif T.is_node(col):
                picked.append(T.index(col, i))
            else:
                picked.append(col[i])
        return type(self)(*picked)

    def logpdf(self, x):
        raise NotImplementedError

    def sample(self, rng):
        raise NotImplementedError

    def _shape_check(self, x):
        if self.batched and np.ndim(_raw(x)) > 0 and np.shape(_raw(x)) != (self.size,):
            raise DimensionError(f"{self.name}: value of length {np.size(_raw(x))} "
                                 f"against {self.size} broadcast elements")


class Normal(Distribution):
    name = "Normal"

    def __init__(self, mu, sigma):
        _finite(mu, sigma)
        _check(_raw(sigma) > 0, "Normal: sigma must be > 0")
        self.mu, self.sigma = mu, sigma
        self.params = (mu, sigma)

    def logpdf(self, x):
        self._shape_check(x)
        z = T.div(T.sub(x, self.mu), self.sigma)
        lp = T.sub(T.sub(-HALF_LOG_2PI, T.log(self.sigma)), T.mul(0.5, T.mul(z, z)))
        return T.sum(lp) if np.ndim(T.value_of(lp)) else lp

    def sample(self, rng):
        mu, sigma = _raw(self.mu), _raw(self.sigma)
        if self.batched:
            return rng.normal(mu, sigma, size=self.size).astype(float)
        return float(rng.normal(mu, sigma))

    def cdf(self, x):
        from scipy import stats
        return stats.norm.cdf(x, loc=_raw(self.mu), scale=_raw(self.sigma))


class MvNormalIso(Distribution):
    """Isotropic multivariate normal: covariance ``sigma**2 * I``."""

    name = "MvNormal"
    multivariate = True

    def __init__(self, mean, sigma):
        if np.ndim(_raw(mean)) != 1:
            raise DimensionError("MvNormal: mean must be a vector")
        if np.ndim(_raw(sigma)) != 0:
            raise DimensionError("MvNormal: only a scalar standard deviation is supported")
        _finite(mean, sigma)
        _check(_raw(sigma) > 0, "MvNormal: sigma must be > 0")
        self.mean, self.sigma = mean, sigma
        self.params = (mean, sigma)

    @property
    def dim(self):
        return len(_raw(self.mean))

    def logpdf(self, x):
        if np.ndim(_raw(x)) != 1 or len(_raw(x)) != self.dim:
            raise DimensionError(
                f"MvNormal: expected a vector of length {self.dim}, got shape {np.shape(_raw(x))}")
        d = self.dim
        r = T.sub(x, self.mean)
        quad = T.div(T.dot(r, r), T.mul(self.sigma, self.sigma))
        return T.sub(T.sub(-d * HALF_LOG_2PI, T.mul(d, T.log(self.sigma))), T.mul(0.5, quad))

    def sample(self, rng):
        return _raw(self.mean) + _raw(self.sigma) * rng.standard_normal(self.dim)


class Gamma(Distribution):
    """Shape/scale parameterisation: mean = shape * scale."""

    name = "Gamma"

    def __init__(self, shape, scale):
        _finite(shape, scale)
        _check((_raw(shape) > 0) & (_raw(scale) > 0), "Gamma: shape and scale must be > 0")
        self.shape, self.scale = shape, scale
        self.params = (shape, scale)

    def logpdf(self, x):
        self._shape_check(x)
        xv = _raw(x)
        if np.any(xv <= 0) or np.any(xv == math.inf):
            return NEG_INF
        k, th = self.shape, self.scale
        lp = T.sub(
            T.add(T.neg(T.add(T.lgamma(k), T.mul(k, T.log(th)))), T.mul(T.sub(k, 1.0), T.log(x))),
            T.div(x, th),
        )
        return T.sum(lp) if np.ndim(T.value_of(lp)) else lp

    def sample(self, rng):
        k, th = _raw(self.shape), _raw(self.scale)
        if self.batched:
            return rng.gamma(k, th, size=self.size).astype(float)
        return float(rng.gamma(k, th))

    def cdf(self, x):
        from scipy import stats
        return stats.gamma.cdf(x, a=_raw(self.shape), scale=_raw(self.scale))


class Beta(Distribution):
    name = "Beta"

    def __init__(self, alpha, beta):
        _finite(alpha, beta)
        _check((_raw(alpha) > 0) & (_raw(beta) > 0), "Beta: alpha and beta must be > 0")
        self.alpha, self.beta = alpha, beta
        self.params = (alpha, beta)

    def logpdf(self, x):
        self._shape_check(x)
        xv = _raw(x)
        if np.any((xv <= 0) | (xv >= 1)):
            return NEG_INF
        a, b = self.alpha, self.beta
        log_beta_fn = T.sub(T.add(T.lgamma(a), T.lgamma(b)), T.lgamma(T.add(a, b)))
        lp = T.sub(
            T.add(T.mul(T.sub(a, 1.0), T.log(x)), T.mul(T.sub(b, 1.0), T.log(T.sub(1.0, x)))),
            log_beta_fn,
        )
        return T.sum(lp) if np.ndim(T.value_of(lp)) else lp

    def sample(self, rng):
        a, b = _raw(self.alpha), _raw(self.beta)
        if self.batched:
            return rng.beta(a, b, size=self.size).astype(float)
        return float(rng.beta(a, b))


class Bernoulli(Distribution):
    name = "Bernoulli"
    discrete = True

    def __init__(self, p):
        pv = _raw(p)
        _check(np.isfinite(pv) & (pv >= 0) & (pv <= 1), "Bernoulli: p must lie in [0, 1]")
        self.p = p
        self.params = (p,)

    def logpdf(self, x):
        self._shape_check(x)
        xv = _raw(x)
        if np.any((xv != 0) & (xv != 1)):
            return NEG_INF
        if np.ndim(xv) == 0:
            return T.log(self.p) if xv == 1 else T.log(T.sub(1.0, self.p))
        return T.sum(T.log(T.where(xv == 1, self.p, T.sub(1.0, self.p))))

    def sample(self, rng):
        p = _raw(self.p)
        if self.batched:
            return (rng.random(self.size) < p).astype(np.int64)
        return int(rng.random() < p)


class Poisson(Distribution):
    name = "Poisson"
    discrete = True

    def __init__(self, lam):
        lv = _raw(lam)
        _check(np.isfinite(lv) & (lv > 0), "Poisson: lambda must be > 0")
        self.lam = lam
        self.params = (lam,)

    def logpdf(self, x):
        self._shape_check(x)
        xv = _raw(x)
        if np.any((xv < 0) | (xv != np.floor(xv))):
            return NEG_INF
        lp = T.sub(T.sub(T.mul(xv, T.log(self.lam)), self.lam), T.lgamma(xv + 1.0))
        return T.sum(lp) if np.ndim(T.value_of(lp)) else lp

    def sample(self, rng):
        lam = _raw(self.lam)
        if self.batched:
            return rng.poisson(lam, size=self.size).astype(np.int64)
        return int(rng.poisson(lam))


class Categorical(Distribution):
    """Distribution over 1..K."""

    name = "Categorical"
    discrete = True
    multivariate = True

    def __init__(self, probs):
        pv = np.asarray(_raw(probs))
        if pv.ndim != 1 or pv.size == 0:
            raise DimensionError("Categorical: probs must be a non-empty vector")
        _check(np.isfinite(pv) & (pv >= 0), "Categorical: probabilities must be >= 0")
        _check(abs(pv.sum() - 1.0) <= 1e-12, "Categorical: probabilities must sum to 1")
        self.probs = probs
        self.params = (probs,)

    def logpdf(self, x):
        xv = _raw(x)
        if np.ndim(xv) != 0:
            raise DimensionError("Categorical: value must be a scalar")
        k = len(_raw(self.probs))
        if xv != np.floor(xv) or not 1 <= xv <= k:
            return NEG_INF
        return T.log(T.index(self.probs, int(xv) - 1))

    def sample(self, rng):
        cdf = np.cumsum(_raw(self.probs))
        i = int(np.searchsorted(cdf, rng.random(), side="right"))
        return min(i, len(cdf) - 1) + 1


class Dirichlet(Distribution):
    name = "Dirichlet"
    multivariate = True

    def __init__(self, alpha):
        av = np.asarray(_raw(alpha))
        if av.ndim != 1 or av.size < 2:
            raise DimensionError("Dirichlet: alpha must be a vector of length >= 2")
        _check(np.isfinite(av) & (av > 0), "Dirichlet: alpha must be > 0")
        self.alpha = alpha
        self.params = (alpha,)

    @property
    def dim(self):
        return len(_raw(self.alpha))

    def logpdf(self, x):
        xv = np.asarray(_raw(x))
        if xv.shape != (self.dim,):
            raise DimensionError(f"Dirichlet: expected a vector of length {self.dim}")
        if np.any(xv <= 0) or abs(xv.sum() - 1.0) > 1e-8:
            return NEG_INF
        a = self.alpha
        norm = T.sub(T.lgamma(T.sum(a)), T.sum(T.lgamma(a)))
        return T.add(norm, T.sum(T.mul(T.sub(a, 1.0), T.log(x))))

    def sample(self, rng):
        return rng.dirichlet(_raw(self.alpha))


DISTRIBUTIONS = {
    "Normal": (Normal, 2),
    "MvNormal": (MvNormalIso, 2),
    "Gamma": (Gamma, 2),
    "Beta": (Beta, 2),
    "Bernoulli": (Bernoulli, 1),
    "Poisson": (Poisson, 1),
    "Categorical": (Categorical, 1),
    "Dirichlet": (Dirichlet, 1),
}


def make_distribution(name: str, args) -> Distribution:
    cls, arity = DISTRIBUTIONS[name]
    if len(args) != arity:
        raise DimensionError(f"{name} takes {arity} argument(s), got {len(args)}")
    return cls(*args)


def logpdf(d: Distribution, x):
    return d.logpdf(x)


def sample(d: Distribution, rng):
    return d.sample(rng)


# -- bijectors --------------------------------------------------------------------

class Bijector:
    """Map from a constrained domain to unconstrained reals.

    ``forward`` is constrained -> unconstrained; ``logabsdetjac_inverse(y)``
    is log|det d inverse(y) / dy|.
    """

    kind = "Bijector"

    def __repr__(self):
        return self.kind

    def __eq__(self, other):
        return type(self) is type(other) and self.__dict__ == other.__dict__

    def unconstrained_size(self, n: int) -> int:
        return n

    def constrained_size(self, n: int) -> int:
        return n


class Identity(Bijector):
    kind = "Identity"

    def forward(self, x):
        return x

    def inverse(self, y):
        return y

    def logabsdetjac_inverse(self, y):
        return 0.0 if np.ndim(T.value_of(y)) == 0 else np.zeros(np.shape(T.value_of(y)))


class Log(Bijector):
    kind = "Log"

    def forward(self, x):
        if np.any(_raw(x) <= 0):
            raise ModelDomainError("Log bijector: value must be > 0")
        return T.log(x)

    def inverse(self, y):
        return T.exp(y)

    def logabsdetjac_inverse(self, y):
        return y


class Logit(Bijector):
    kind = "Logit"

    def forward(self, x):
        xv = _raw(x)
        if np.any((xv <= 0) | (xv >= 1)):
            raise ModelDomainError("Logit bijector: value must lie in (0, 1)")
        return T.sub(T.log(x), T.log(T.sub(1.0, x)))

    def inverse(self, y):
        return T.logistic(y)

    def logabsdetjac_inverse(self, y):
        return T.neg(T.add(T.softplus(T.neg(y)), T.softplus(y)))


class StickBreaking(Bijector):
    """K-simplex <-> R^(K-1) via remaining-mass fractions.

    y_k = logit(z_k) + log(K - k), z_k = x_k / (1 - sum_{j<k} x_j), k = 1..K-1,
    so the uniform simplex maps to zero.
    """

    kind = "StickBreaking"

    def __init__(self, K: int):
        self.K = K

    def __repr__(self):
        return f"StickBreaking(K={self.K})"

    def unconstrained_size(self, n):
        return n - 1

    def constrained_size(self, n):
        return n + 1

    def forward(self, x):
        xv = np.asarray(_raw(x))
        if xv.shape != (self.K,) or np.any(xv <= 0) or abs(xv.sum() - 1.0) > 1e-8:
            raise ModelDomainError(f"StickBreaking: value is not on the {self.K}-simplex")
        remaining = 1.0
        out = []
        for k in range(self.K - 1):
            xk = T.index(x, k)
            z = T.div(xk, remaining)
            out.append(T.add(T.sub(T.log(z), T.log(T.sub(1.0, z))), math.log(self.K - 1 - k)))
            remaining = T.sub(remaining, xk)
        return T.stack(out)

    def _inverse_and_logjac(self, y):
        remaining = 1.0
        xs, logjac = [], 0.0
        for k in range(self.K - 1):
            u = T.sub(T.index(y, k), math.log(self.K - 1 - k))
            z = T.logistic(u)
            # log z + log(1 - z) + log(remaining)
            logjac = T.add(logjac, T.sub(T.log(remaining), T.add(T.softplus(T.neg(u)), T.softplus(u))))
            xk = T.mul(remaining, z)
            xs.append(xk)
            remaining = T.sub(remaining, xk)
        xs.append(remaining)
        return T.stack(xs), logjac

    def inverse(self, y):
        return self._inverse_and_logjac(y)[0]

    def logabsdetjac_inverse(self, y):
        return self._inverse_and_logjac(y)[1]


def bijector_of(d: Distribution) -> Bijector:
    if d.discrete:
        raise NotDifferentiable(f"{d.name} is discrete and has no bijector")
    if isinstance(d, (Normal, MvNormalIso)):
        return Identity()
    if isinstance(d, Gamma):
        return Log()
    if isinstance(d, Beta):
        return Logit()
    if isinstance(d, Dirichlet):
        return StickBreaking(d.dim)
    raise NotDifferentiable(f"no bijector for {d.name}")


def bijector_apply(b: Bijector, x):
    """Return ``(forward(x), logabsdetjac_inverse(forward(x)))``."""
    y = b.forward(x)
    return y, b.logabsdetjac_inverse(y)
