"""Bundled benchmark models and synthetic data generators."""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from ..dsl import parse_model
from ..interpreter import instantiate

MODEL_IDS = ("gaussian_nd", "gauss_unknown", "linreg", "logreg", "hier_poisson")

# desk-scale defaults used by the benchmark harness
DEFAULT_SCALES = {
    "gaussian_nd": {"dim": 100},
    "gauss_unknown": {"n": 1000},
    "linreg": {"n": 100, "dim": 2},
    "logreg": {"n": 500, "dim": 20},
    "hier_poisson": {"n": 50, "groups": 5},
}

# step sizes for static HMC with 4 leapfrog steps, hand-tuned on the bundled
# data sets (acceptance 0.85 to 0.97)
DEFAULT_STEP_SIZES = {
    "gaussian_nd": 0.5,
    "gauss_unknown": 0.05,
    "linreg": 0.08,
    "logreg": 0.2,
    "hier_poisson": 0.03,
}


def source(model_id: str) -> str:
    return resources.files(__name__).joinpath(f"{model_id}.ppl").read_text()


def decl(model_id: str):
    return parse_model(source(model_id))


def default_data(model_id: str) -> dict:
    """The small data set shipped next to each corpus model."""
    text = resources.files(__name__).joinpath(f"{model_id}.json").read_text()
    return json.loads(text)


def make_data(model_id: str, rng: np.random.Generator, **scale) -> dict:
    """Simulate a data set for ``model_id`` at the given scale."""
    s = {**DEFAULT_SCALES[model_id], **scale}
    if model_id == "gaussian_nd":
        return {"d": int(s["dim"])}
    if model_id == "gauss_unknown":
        return {"y": rng.normal(0.5, 1.5, size=s["n"])}
    if model_id == "linreg":
        n, d = s["n"], s["dim"]
        X = rng.normal(size=(n, d))
        w = rng.normal(size=d)
        return {"X": X, "y": X @ w + 0.5 * rng.normal(size=n)}
    if model_id == "logreg":
        n, d = s["n"], s["dim"]
        X = rng.normal(size=(d, n))
        w = rng.normal(size=d) / np.sqrt(d)
        p = 1.0 / (1.0 + np.exp(-(X.T @ w)))
        return {"X": X, "y": (rng.random(n) < p).astype(np.int64)}
    if model_id == "hier_poisson":
        n, ns = s["n"], s["groups"]
        idx = np.arange(n) % ns + 1
        x = rng.normal(size=n)
        a0s = 0.3 * rng.normal(size=ns)
        lam = np.exp(1.0 + a0s[idx - 1] + 0.5 * x)
        return {"y": rng.poisson(lam).astype(np.int64), "x": x, "idx": idx.astype(np.int64), "ns": ns}
    raise KeyError(model_id)


def load(model_id: str, data: dict | None = None):
    """Instantiate a corpus model with ``data`` (default: the bundled data set)."""
    return instantiate(decl(model_id), default_data(model_id) if data is None else data)


def to_json_data(data: dict) -> dict:
    out = {}
    for k, v in data.items():
        out[k] = v.tolist() if isinstance(v, np.ndarray) else v
    return out
