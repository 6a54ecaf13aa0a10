"""MCMC output: storage, summaries and CSV persistence.

Draws are kept in constrained space, one column per flattened scalar
(``w[1]``, ``w[2]``, ``s``).  The CSV layout is::

    # model = linreg
    # sampler = hmc
    iteration,w[1],w[2],s,lp
    1,0.5,...

Metadata lines start with ``#`` and precede the header.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .addressing import as_varname, subsumes, varname_parse
from .errors import ChainFormatError, NotFound, ParseError

__all__ = ["Chain", "summarize", "ess", "save_csv", "load_csv", "get_column"]


@dataclass(frozen=True, eq=False)
class Chain:
    names: tuple
    draws: np.ndarray
    logp: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        draws = np.array(self.draws, dtype=float).reshape(-1, len(names))
        logp = np.array(self.logp, dtype=float).reshape(-1)
        if len(set(names)) != len(names):
            raise ValueError("chain column names must be unique")
        if draws.shape[0] != logp.shape[0]:
            raise ValueError(f"{draws.shape[0]} draws but {logp.shape[0]} log-probabilities")
        draws.setflags(write=False)
        logp.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "draws", draws)
        object.__setattr__(self, "logp", logp)
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self):
        return self.draws.shape[0]

    def get_column(self, v):
        return get_column(self, v)

    def discard(self, fraction: float = 0.5) -> "Chain":
        """Drop the leading ``fraction`` of iterations (warmup)."""
        k = int(len(self) * fraction)
        return Chain(self.names, self.draws[k:], self.logp[k:], {**self.meta, "discarded": k})

    def summarize(self):
        return summarize(self)


def ess(x) -> float:
    """Effective sample size with Geyer's initial positive sequence."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        return float("nan")
    xc = x - x.mean()
    var0 = xc @ xc / n
    if var0 == 0.0:
        return float("nan")
    # autocovariance via zero-padded FFT
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    rho = acov / var0
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
    # antithetic chains can push tau towards zero; cap the estimate
    cap = n * max(1.0, math.log10(n))
    return float(cap if tau <= n / cap else n / tau)


def summarize(c: Chain) -> dict:
    if len(c) < 2:
        raise ValueError("summaries need at least two draws")
    out = {}
    for j, name in enumerate(c.names):
        col = c.draws[:, j]
        out[name] = {"mean": float(col.mean()), "sd": float(col.std(ddof=1)), "ess": ess(col)}
    return out


def get_column(c: Chain, v):
    """Columns whose names are subsumed by ``v``, as an (n, k) array."""
    vn = as_varname(v)
    idx = [j for j, n in enumerate(c.names) if subsumes(vn, varname_parse(n))]
    if not idx:
        raise NotFound(f"no chain column matches {vn}")
    return c.draws[:, idx]


def _fmt(x: float) -> str:
    return f"{float(x):.17g}" if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))


def save_csv(c: Chain, path) -> None:
    lines = [f"# {k} = {v}" for k, v in c.meta.items()]
    lines.append(",".join(["iteration", *c.names, "lp"]))
    for i in range(len(c)):
        row = [str(i + 1), *(_fmt(x) for x in c.draws[i]), _fmt(c.logp[i])]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _meta_value(s: str):
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def load_csv(path) -> Chain:
    text = Path(path).read_text(encoding="utf-8")
    meta, header, rows, lp = {}, None, [], []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        if header is None and line.startswith("#"):
            key, sep, val = line[1:].partition("=")
            if not sep:
                raise ChainFormatError("metadata line must look like '# key = value'", lineno)
            meta[key.strip()] = _meta_value(val.strip())
            continue
        cells = line.split(",")
        if header is None:
            if len(cells) < 2 or cells[0] != "iteration" or cells[-1] != "lp":
                raise ChainFormatError("header must be 'iteration,<names>,lp'", lineno)
            header = cells[1:-1]
            for name in header:
                try:
                    varname_parse(name)
                except ParseError as exc:
                    raise ChainFormatError(f"bad column name {name!r}: {exc}", lineno) from None
            if len(set(header)) != len(header):
                raise ChainFormatError("duplicate column names", lineno)
            continue
        if len(cells) != len(header) + 2:
            raise ChainFormatError(
                f"expected {len(header) + 2} fields, found {len(cells)}", lineno)
        try:
            vals = [float(x) for x in cells[1:]]
            int(cells[0])
        except ValueError:
            raise ChainFormatError("non-numeric field", lineno) from None
        rows.append(vals[:-1])
        lp.append(vals[-1])
    if header is None:
        raise ChainFormatError("missing header line", 1)
    draws = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return Chain(tuple(header), draws, np.array(lp, dtype=float), meta)
