"""Command-line front end: ``traceppl check|run|query|bench``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import bench as B
from . import corpus
from .chain import save_csv, summarize
from .dsl import parse_file
from .dsl.check import check_model
from .errors import ParseError, PPLError
from .inference import HmcConfig, MhConfig, hmc_sample, mh_sample, prior_sample, spawn_seeds
from .interpreter import DEFAULT, LikelihoodContext, MiniBatchContext, PriorContext, instantiate
from .query import default_registry, run_query

SEED_ENV = "TRACE_PPL_SEED"


class CliError(Exception):
    pass


# -- helpers -------------------------------------------------------------------------

def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from None


def _load_models(path: str):
    text = _read_text(path)
    try:
        decls = parse_file(text)
    except ParseError as exc:
        raise CliError(f"{path}:{exc}") from None
    if not decls:
        raise CliError(f"{path}: no model declarations")
    return decls


def _pick_model(decls, name, path):
    if name is None:
        if len(decls) > 1:
            raise CliError(f"{path} declares several models; choose one with --model")
        return decls[0]
    for d in decls:
        if d.name == name:
            return d
    raise CliError(f"{path} has no model named {name!r}")


def _load_data(path):
    if path is None:
        return {}
    try:
        data = json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise CliError(f"{path}: data must be a JSON object mapping argument names to values")
    return data


def _seed(arg):
    if arg is not None:
        return arg
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise CliError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _context(name: str, weight):
    base = {"default": DEFAULT, "likelihood": LikelihoodContext(), "prior": PriorContext()}[name]
    return base if weight is None else MiniBatchContext(base, weight)


def _chain_paths(out: Path, n: int):
    if n == 1:
        return [out]
    stem = out.name[: -len(out.suffix)] if out.suffix else out.name
    return [out.with_name(f"{stem}_chain{i}.csv") for i in range(1, n + 1)]


def _sample(job):
    model, sampler, cfg, ctx = job
    if sampler == "hmc":
        return hmc_sample(model, cfg, ctx)
    if sampler == "mh":
        return mh_sample(model, cfg, ctx)
    return prior_sample(model, cfg["n_iters"], cfg["seed"], ctx)


def _summary_table(chain) -> str:
    stats = summarize(chain)
    rows = [(n, f"{s['mean']:.4f}", f"{s['sd']:.4f}", f"{s['ess']:.1f}") for n, s in stats.items()]
    header = ("parameter", "mean", "sd", "ess")
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(4)]
    lines = ["  ".join(h.ljust(w) if i == 0 else h.rjust(w) for i, (h, w) in enumerate(zip(header, widths)))]
    for r in rows:
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
    return "\n".join(lines)


# -- commands ----------------------------------------------------------------------------

def cmd_check(args) -> int:
    decls = _load_models(args.file)
    problems = [p for d in decls for p in check_model(d)]
    if problems:
        for p in problems:
            print(f"{args.file}:{p}", file=sys.stderr)
        return 1
    for d in decls:
        print(f"ok {d.name}({', '.join(d.params)})")
    return 0


def cmd_run(args) -> int:
    decls = _load_models(args.file)
    decl = _pick_model(decls, args.model, args.file)
    problems = check_model(decl)
    if problems:
        raise CliError(f"{args.file}:{problems[0]}")
    model = instantiate(decl, _load_data(args.data))
    ctx = _context(args.context, args.minibatch_weight)
    seed = _seed(args.seed)
    if args.chains < 1:
        raise CliError("--chains must be at least 1")
    seeds = [seed] if args.chains == 1 else spawn_seeds(seed, args.chains)
    jobs = []
    for s in seeds:
        if args.sampler == "hmc":
            eps = args.step_size
            if eps is None:
                eps = corpus.DEFAULT_STEP_SIZES.get(decl.name, 0.1)
            cfg = HmcConfig(eps, args.leapfrog, args.iters, s)
        elif args.sampler == "mh":
            cfg = MhConfig(args.proposal_sd, args.iters, s)
        else:
            if args.iters < 1:
                raise CliError("--iters must be at least 1")
            cfg = {"n_iters": args.iters, "seed": s}
        jobs.append((model, args.sampler, cfg, ctx))
    if len(jobs) == 1:
        chains = [_sample(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=min(len(jobs), os.cpu_count() or 1)) as pool:
            chains = list(pool.map(_sample, jobs))
    out = Path(args.out) if args.out else Path(f"{decl.name}_chain.csv")
    for path, chain in zip(_chain_paths(out, len(chains)), chains):
        save_csv(chain, path)
        print(f"# wrote {path} ({len(chain)} draws, sampler {chain.meta['sampler']}, seed {chain.meta['seed']})")
        if len(chain) >= 2:
            print(_summary_table(chain))
    return 0


def cmd_query(args) -> int:
    registry = default_registry()
    if args.model_file:
        data = _load_data(args.data) if args.data else None
        for d in _load_models(args.model_file):
            registry.add(d, data)
    elif args.data:
        raise CliError("--data needs --model-file")
    kind, value = run_query(args.query, registry)
    print(f"{kind} {value:.15g}")
    return 0


def cmd_bench(args) -> int:
    models = list(corpus.MODEL_IDS) if args.all else [args.model]
    if models == [None]:
        raise CliError("bench needs --model or --all")
    specs = []
    for mid in models:
        scale = {"dim": args.dim, "n": args.n, "groups": args.groups}
        specs.append(B.BenchSpec(mid, scale, args.step_size if len(models) == 1 else None,
                                 args.leapfrog, args.iters, args.reps, args.evals, _seed(args.seed)))
    report = B.make_report(specs)
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    if args.format == "json":
        print(json.dumps(report, indent=2))
    else:
        print(B.format_table(report))
    return 0


# -- entry point ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="traceppl", description="Trace-based probabilistic programming engine.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="parse and check a model file")
    c.add_argument("file")
    c.set_defaults(func=cmd_check)

    r = sub.add_parser("run", help="sample from a model and write a chain CSV")
    r.add_argument("file")
    r.add_argument("--model", help="model name when the file declares several")
    r.add_argument("--data", help="JSON file binding the model arguments")
    r.add_argument("--sampler", choices=("hmc", "mh", "prior"), default="hmc")
    r.add_argument("--step-size", type=float, help="HMC step size (default: tuned value for corpus models, else 0.1)")
    r.add_argument("--leapfrog", type=int, default=4)
    r.add_argument("--iters", type=int, default=2000)
    r.add_argument("--proposal-sd", type=float, default=0.5)
    r.add_argument("--seed", type=int, help=f"RNG seed (fallback: ${SEED_ENV}, then 0)")
    r.add_argument("--chains", type=int, default=1)
    r.add_argument("--out", help="output CSV (default: <model>_chain.csv)")
    r.add_argument("--context", choices=("default", "likelihood", "prior"), default="default")
    r.add_argument("--minibatch-weight", type=float)
    r.set_defaults(func=cmd_run)

    q = sub.add_parser("query", help="evaluate a probability query")
    q.add_argument("query")
    q.add_argument("--model-file", help="extra model definitions (the bundled corpus is always available)")
    q.add_argument("--data", help="default data for models from --model-file")
    q.set_defaults(func=cmd_query)

    b = sub.add_parser("bench", help="time HMC runs and trace evaluation")
    b.add_argument("--model", choices=corpus.MODEL_IDS)
    b.add_argument("--all", action="store_true", help="run every corpus model")
    b.add_argument("--dim", type=int)
    b.add_argument("--n", type=int, help="number of observations")
    b.add_argument("--groups", type=int)
    b.add_argument("--iters", type=int, default=200)
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--evals", type=int, default=1000)
    b.add_argument("--step-size", type=float)
    b.add_argument("--leapfrog", type=int, default=4)
    b.add_argument("--seed", type=int)
    b.add_argument("--out", help="write the JSON report here")
    b.add_argument("--format", choices=("table", "json"), default="table")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (PPLError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
