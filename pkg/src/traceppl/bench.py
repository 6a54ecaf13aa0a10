"""Benchmark harness: full HMC runs and per-evaluation untyped vs typed timing."""

from __future__ import annotations

import platform
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import corpus
from .inference import HmcConfig, hmc_sample, make_rng, sample_prior
from .interpreter import evaluate, instantiate
from .trace import specialize

SCHEMA = 1

_SCALE_KEYS = {
    "gaussian_nd": ("dim",),
    "gauss_unknown": ("n",),
    "linreg": ("n", "dim"),
    "logreg": ("n", "dim"),
    "hier_poisson": ("n", "groups"),
}


@dataclass(frozen=True)
class BenchSpec:
    model: str
    scale: dict = field(default_factory=dict)
    step_size: float | None = None
    n_leapfrog: int = 4
    n_iters: int = 200
    reps: int = 5
    n_evals: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.model not in corpus.MODEL_IDS:
            raise ValueError(f"unknown benchmark model {self.model!r}; choose from {', '.join(corpus.MODEL_IDS)}")
        scale = {k: v for k, v in self.scale.items() if k in _SCALE_KEYS[self.model] and v is not None}
        for k, v in scale.items():
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"scale parameter {k} must be a positive integer")
        object.__setattr__(self, "scale", {**corpus.DEFAULT_SCALES[self.model], **scale})
        if self.reps < 3:
            raise ValueError("benchmarks need at least 3 repetitions")
        if self.n_evals < 1 or self.n_iters < 1:
            raise ValueError("iteration counts must be positive")

    @property
    def hmc_config(self) -> HmcConfig:
        eps = self.step_size if self.step_size is not None else corpus.DEFAULT_STEP_SIZES[self.model]
        return HmcConfig(eps, self.n_leapfrog, self.n_iters, self.seed)


def median_iqr(xs) -> tuple[float, float]:
    q1, med, q3 = np.percentile(np.asarray(xs, dtype=float), [25, 50, 75])
    return float(med), float(q3 - q1)


def build_model(spec: BenchSpec):
    data = corpus.make_data(spec.model, make_rng(spec.seed), **spec.scale)
    return instantiate(corpus.decl(spec.model), data)


def time_evaluations(m, n_evals: int, reps: int, seed: int = 0) -> dict:
    """Wall-clock seconds for ``n_evals`` evaluations per repetition on each trace kind."""
    ut, _ = sample_prior(m, make_rng(seed))
    tt = specialize(ut)
    out = {}
    for kind, t in (("untyped", ut), ("typed", tt)):
        evaluate(m, t)  # warm caches
        times = []
        for _ in range(reps):
            start = time.perf_counter()
            for _ in range(n_evals):
                evaluate(m, t)
            times.append(time.perf_counter() - start)
        out[kind] = times
    return out


def run_bench(spec: BenchSpec) -> dict:
    m = build_model(spec)
    evals = time_evaluations(m, spec.n_evals, spec.reps, spec.seed)
    hmc_times, accept = [], []
    for r in range(spec.reps):
        start = time.perf_counter()
        c = hmc_sample(m, spec.hmc_config)
        hmc_times.append(time.perf_counter() - start)
        accept.append(c.meta["accept_rate"])
    u_med, u_iqr = median_iqr(evals["untyped"])
    t_med, t_iqr = median_iqr(evals["typed"])
    h_med, h_iqr = median_iqr(hmc_times)
    return {
        "model": spec.model,
        "scale": dict(spec.scale),
        "hmc": {
            "median_s": h_med, "iqr_s": h_iqr, "n_iters": spec.n_iters,
            "n_leapfrog": spec.n_leapfrog, "step_size": spec.hmc_config.step_size,
            "accept_rate": float(np.mean(accept)),
        },
        "eval": {
            "n_evals": spec.n_evals,
            "untyped": {"median_s": u_med, "iqr_s": u_iqr, "per_eval_s": u_med / spec.n_evals},
            "typed": {"median_s": t_med, "iqr_s": t_iqr, "per_eval_s": t_med / spec.n_evals},
            "speedup": u_med / t_med,
        },
        "reps": spec.reps,
    }


def make_report(specs: list[BenchSpec]) -> dict:
    return {
        "schema": SCHEMA,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "machine": platform.machine(),
        "specs": [asdict(s) for s in specs],
        "results": [run_bench(s) for s in specs],
    }


def format_table(report: dict) -> str:
    header = ["model", "scale", "hmc s (median)", "hmc IQR", "untyped us/eval", "typed us/eval", "speedup"]
    rows = []
    for r in report["results"]:
        scale = " ".join(f"{k}={v}" for k, v in r["scale"].items())
        ev = r["eval"]
        rows.append([
            r["model"], scale, f"{r['hmc']['median_s']:.3f}", f"{r['hmc']['iqr_s']:.3f}",
            f"{ev['untyped']['per_eval_s'] * 1e6:.1f}", f"{ev['typed']['per_eval_s'] * 1e6:.1f}",
            f"{ev['speedup']:.2f}x",
        ])
    widths = [max(len(x) for x in col) for col in zip(header, *rows)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))))
    return "\n".join(lines)
