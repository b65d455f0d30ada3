"""Command-line entry point: ``hcnas <command> ...``.

Exit codes: 0 success, 1 input error, 2 infeasible budget, 3 divergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np
from scipy import stats

from . import kernels
from .init import balanced_init, lightest_init
from .latency import (LatencyTable, NonMonotoneWarning, default_configs, discrete_latency, expected_latency,
                      batch_discrete_latency, generate_table, load_table)
from .lmo import InfeasibleError
from .objective import ObjectiveSpec, discrete_score, generate_objective
from .optimizer import SolverConfig, bcsfw_search, gd_penalty_toy, parse_schedule, sfw_toy
from .oracle import enumerate_space
from .project import credit, project_argmax, project_credit, project_greedy
from .space import ArchParams, ConfigLabel, SpaceError, SpaceSpec, arch_to_json_str, sample_hard_batch, validate

TOOL_VERSION = "0.1.0"

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_DIVERGED = 3


class InputError(Exception):
    pass


def demo_space() -> SpaceSpec:
    """Five stages of up to four blocks over the 12 inverted-residual configs."""
    configs = tuple(ConfigLabel(i, a) for i, a in enumerate(default_configs()))
    return SpaceSpec(5, 4, configs, 2)


def _write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_space(path) -> SpaceSpec:
    return demo_space() if path is None else SpaceSpec.load(path)


def _load_table(path, spec: SpaceSpec, seed: int) -> LatencyTable:
    if path is None:
        return generate_table(spec, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonMonotoneWarning)
        return load_table(path, spec)


def _load_objective(path, spec: SpaceSpec, table: LatencyTable, seed: int) -> ObjectiveSpec:
    if path is None:
        return generate_objective(spec, table, seed=seed)
    obj = ObjectiveSpec.load(path)
    if obj.kind == "toy_quadratic":
        raise InputError("search needs a linear_surrogate or noisy_surrogate objective")
    if obj.u_alpha.shape != spec.alpha_shape:
        raise InputError(f"objective shape {obj.u_alpha.shape} != space shape {spec.alpha_shape}")
    return obj


def _seed(args) -> int:
    env = os.environ.get("HCNAS_SEED")
    if env is not None and env != "":
        try:
            return int(env)
        except ValueError as exc:
            raise InputError(f"HCNAS_SEED must be an integer, got {env!r}") from exc
    return args.seed


# search

def manifest_from_args(args) -> dict:
    cfg = SolverConfig(args.iters, args.schedule, args.block_rule, _seed(args), args.budget_ms)
    return {
        "version": 1,
        "tool_version": TOOL_VERSION,
        "seed": cfg.seed,
        "space": args.space,
        "latency_table": args.latency_table,
        "objective": args.objective,
        "budget_ms": args.budget_ms,
        "init": args.init,
        "temperature": args.temperature,
        "exact_mckp": bool(args.exact_mckp),
        "solver": cfg.to_json(),
        "out": args.out,
    }


def run_search(manifest: dict, out: Path) -> int:
    seed = int(manifest["seed"])
    T = float(manifest["budget_ms"])
    spec = _load_space(manifest.get("space"))
    table = _load_table(manifest.get("latency_table"), spec, seed)
    objective = _load_objective(manifest.get("objective"), spec, table, seed)
    if manifest.get("temperature") is not None:
        objective.temperature = float(manifest["temperature"])
    solver = manifest["solver"]
    cfg = SolverConfig(int(solver["max_iters"]), solver["step_schedule"], solver["block_rule"], seed, T,
                       block_prob=float(solver.get("block_prob", 0.5)))

    init = balanced_init(spec, table, T) if manifest.get("init", "balanced") == "balanced" else lightest_init(spec, table)
    trace = bcsfw_search(init, objective, table, cfg, spec)
    params = trace.params
    proj = project_credit(params, table, T, spec)
    argmax = project_argmax(params, spec)

    def summary(arch):
        return {
            "arch": arch.to_json(),
            "latency_ms": discrete_latency(arch, table),
            "credit": credit(arch, params),
            "score": discrete_score(arch, objective),
        }

    result = {
        "budget_ms": T,
        "continuous_latency_ms": expected_latency(params, table),
        "continuous_objective": trace.records[-1].objective if trace.records else None,
        "credit_projection": summary(proj),
        "argmax": summary(argmax),
    }
    final = proj
    if manifest.get("exact_mckp"):
        greedy = project_greedy(params, table, T, spec)
        result["greedy_mckp"] = summary(greedy)
        final = greedy
    result.update(summary(final))
    if result["latency_ms"] > T + kernels.FEAS_TOL:
        raise AssertionError(f"projected latency {result['latency_ms']} exceeds budget {T}")

    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "result.json", result)
    _write_json(out / "params.json", params.to_json())
    trace.write_csv(out / "trace.csv")
    _write_json(out / "manifest.json", manifest)
    print(arch_to_json_str(final))
    print(f"latency {result['latency_ms']:.6f} ms <= budget {T:.6f} ms")
    return EXIT_OK


def cmd_search(args) -> int:
    if args.manifest:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
        if args.out:
            manifest["out"] = args.out
        env = os.environ.get("HCNAS_SEED")
        if env:
            manifest["seed"] = int(env)
            manifest["solver"]["seed"] = int(env)
    else:
        if args.budget_ms is None:
            raise InputError("--budget-ms is required without --manifest")
        manifest = manifest_from_args(args)
    if not manifest.get("out"):
        raise InputError("an output directory is required (--out)")
    return run_search(manifest, Path(manifest["out"]))


# toy

def cmd_toy(args) -> int:
    d, iters = args.dim, args.iters
    if d < 1:
        raise InputError("--dim must be >= 1")
    lambdas = [float(x) for x in args.lambdas.split(",") if x.strip()]
    seed = _seed(args)
    rows = []
    fw = sfw_toy(d, iters, args.schedule, seed)
    for t, obj, res in zip(fw.iters, fw.objective, fw.residual):
        rows.append(("fw", "", t, obj, res))
    diverged = []
    for lam in lambdas:
        lr = 1.0 / (2.0 + 2.0 * d * lam) if args.lr == "auto" else float(args.lr)
        gd = gd_penalty_toy(d, lam, lr, iters, seed)
        for t, obj, res in zip(gd.iters, gd.objective, gd.residual):
            rows.append(("gd", repr(lam), t, obj, res))
        if gd.diverged:
            diverged.append(lam)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "fw_vs_gd.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("method", "lambda", "iter", "objective", "constraint_residual"))
        for m, lam, t, obj, res in rows:
            w.writerow((m, lam, t, repr(float(obj)), repr(float(res))))
    print(f"fw: objective {fw.objective[-1]:.6g} (optimum {1.0 / d:.6g}), residual {fw.residual[-1]:.3g}")
    if diverged:
        print(f"gd diverged for lambda in {diverged}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


# validate-latency

def random_params(spec: SpaceSpec, rng) -> ArchParams:
    alpha = rng.dirichlet(np.ones(spec.n_configs), size=spec.alpha_shape[:2])
    k = spec.max_depth - spec.min_depth + 1
    beta = np.zeros(spec.beta_shape)
    beta[:, spec.min_depth - 1 :] = rng.dirichlet(np.ones(k), size=spec.num_stages)
    return ArchParams(alpha, beta)


def cmd_validate_latency(args) -> int:
    seed = _seed(args)
    spec = _load_space(args.space)
    table = _load_table(args.latency_table, spec, seed)
    rng = np.random.default_rng(seed)
    formula, measured = [], []
    for _ in range(args.samples):
        p = random_params(spec, rng)
        validate(p, spec)
        depth, config = sample_hard_batch(p, args.mc, rng)
        formula.append(expected_latency(p, table))
        measured.append(float(batch_discrete_latency(depth, config, table).mean()))
    fit = stats.linregress(formula, measured)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("formula_latency", "monte_carlo_latency"))
            for f, m in zip(formula, measured):
                w.writerow((repr(f), repr(m)))
    print(f"slope {fit.slope:.6f} intercept {fit.intercept:.6f} r2 {fit.rvalue ** 2:.6f}")
    return EXIT_OK


# gen

def cmd_gen(args) -> int:
    seed = _seed(args)
    if args.kind == "space":
        if args.stages is None and args.depth is None and args.configs is None:
            spec = demo_space()
        else:
            spec = SpaceSpec.uniform(args.stages or 5, args.depth or 4, args.configs or 12, args.min_depth)
        spec.save(args.out)
    elif args.kind == "table":
        spec = _load_space(args.space)
        generate_table(spec, seed=seed).save(args.out)
    else:
        spec = _load_space(args.space)
        table = _load_table(args.latency_table, spec, seed)
        generate_objective(spec, table, seed=seed, kind=args.objective_kind, noise_sd=args.noise_sd).save(args.out)
    print(args.out)
    return EXIT_OK


# project

def cmd_project(args) -> int:
    with open(args.params) as fh:
        params = ArchParams.from_json(json.load(fh))
    if args.space:
        spec = SpaceSpec.load(args.space)
    else:
        S, d, C = params.alpha.shape
        spec = SpaceSpec.uniform(S, d, C, args.min_depth)
    validate(params, spec)
    table = _load_table(args.latency_table, spec, 0) if args.latency_table else None
    if table is None:
        raise InputError("--latency-table is required")
    T = args.budget_ms
    argmax = project_argmax(params, spec)
    arch = project_credit(params, table, T, spec)
    print(arch_to_json_str(arch))
    report = {
        "argmax_latency": discrete_latency(argmax, table),
        "projected_latency": discrete_latency(arch, table),
        "credit_argmax": credit(argmax, params),
        "credit_projected": credit(arch, params),
    }
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


# enumerate

def cmd_enumerate(args) -> int:
    seed = _seed(args)
    spec = _load_space(args.space)
    table = _load_table(args.latency_table, spec, seed)
    objective = None if args.objective is None else _load_objective(args.objective, spec, table, seed)
    T = math.inf if args.budget_ms is None else args.budget_ms
    enum = enumerate_space(spec, table, objective, T)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("arch_json", "latency_ms", "score"))
            for i in range(len(enum)):
                w.writerow((arch_to_json_str(enum.arch(i)), repr(float(enum.latency[i])), repr(float(enum.score[i]))))
    best = enum.best_feasible()
    if best < 0:
        print("best_feasible: none")
        return EXIT_INFEASIBLE
    print(f"best_feasible: {arch_to_json_str(enum.arch(best))} latency_ms {float(enum.latency[best])!r} "
          f"score {float(enum.score[best])!r}")
    return EXIT_OK


def _schedule(text: str) -> str:
    try:
        parse_schedule(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    return text


def _positive(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hcnas", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=TOOL_VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, table=True):
        p.add_argument("--space", help="space JSON (default: the 5x4x12 demo space)")
        if table:
            p.add_argument("--latency-table", help="latency table JSON (default: generated from --seed)")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("search", help="constrained search followed by credit projection")
    common(p)
    p.add_argument("--objective", help="surrogate objective JSON (default: generated from --seed)")
    p.add_argument("--budget-ms", type=float)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--init", choices=("lightest", "balanced"), default="balanced")
    p.add_argument("--schedule", type=_schedule, default="fw4")
    p.add_argument("--block-rule", choices=("random", "alternate"), default="random")
    p.add_argument("--temperature", type=_positive, help="Gumbel temperature of a noisy objective (default: its own, 1.0)")
    p.add_argument("--exact-mckp", action="store_true", help="discretize with the integral greedy MCKP solver")
    p.add_argument("--manifest", help="re-run a manifest.json written by a previous search")
    p.add_argument("--out")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("toy", help="Frank-Wolfe vs penalized gradient descent on min ||x||^2, sum(x)=1")
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--lambdas", default="0.1,1,10,100")
    p.add_argument("--lr", default="auto", help="GD learning rate or 'auto' (1/L for each lambda)")
    p.add_argument("--schedule", type=_schedule, default="fw4")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("validate-latency", help="formula latency vs Monte-Carlo sampled latency")
    common(p)
    p.add_argument("--samples", type=int, default=20, help="number of random parameter points")
    p.add_argument("--mc", type=int, default=10000, help="hard samples per point")
    p.add_argument("--out", help="CSV of (formula, Monte-Carlo) pairs")
    p.set_defaults(func=cmd_validate_latency)

    p = sub.add_parser("gen", help="write a seeded synthetic instance")
    p.add_argument("kind", choices=("table", "objective", "space"))
    common(p)
    p.add_argument("--stages", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--configs", type=int)
    p.add_argument("--min-depth", type=int, default=2)
    p.add_argument("--objective-kind", choices=("linear_surrogate", "noisy_surrogate"), default="linear_surrogate")
    p.add_argument("--noise-sd", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("project", help="discretize continuous parameters under a budget")
    p.add_argument("--params", required=True)
    p.add_argument("--space")
    p.add_argument("--min-depth", type=int, default=2)
    p.add_argument("--latency-table", required=True)
    p.add_argument("--budget-ms", "--budget", dest="budget_ms", type=float, required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("enumerate", help="score every architecture of a small space")
    common(p)
    p.add_argument("--objective")
    p.add_argument("--budget-ms", type=float)
    p.add_argument("--out", help="CSV of (arch_json, latency_ms, score)")
    p.set_defaults(func=cmd_enumerate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible budget: minimal achievable latency is {exc.min_cost!r} ms", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InputError, SpaceError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
