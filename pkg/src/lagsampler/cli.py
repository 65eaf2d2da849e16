"""Command line entry point: ``lagsampler {solve,sample,qkp,compare-terms,bench}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness, qkp
from .model import constrained_from_json, qubo_from_json
from .samplers import SamplerConfig, get_sampler
from .solver import SolverConfig, kkt_report, solve, solve_naive


def _add_sampler_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("sampler")
    g.add_argument("--config", type=Path, help="JSON or TOML file with sampler settings")
    g.add_argument("--beta", type=float)
    g.add_argument("--samples", type=int, dest="num_samples")
    g.add_argument("--sweeps", type=int)
    g.add_argument("--trotter", type=int)
    g.add_argument("--gamma-start", type=float)
    g.add_argument("--gamma-end", type=float)
    g.add_argument("--readout", choices=["random", "best"])
    g.add_argument("--random-order", action="store_true", default=None)
    g.add_argument("--seed", type=int)


def _sampler_config(args, **defaults) -> SamplerConfig:
    overrides = {
        k: getattr(args, k)
        for k in ("beta", "num_samples", "sweeps", "trotter", "gamma_start", "gamma_end", "readout", "random_order", "seed")
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.config is not None:
        return SamplerConfig.from_file(args.config, **{**defaults, **overrides})
    return SamplerConfig(**{**defaults, **overrides})


def _write(payload: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(payload + "\n")
    else:
        out.write_text(payload + "\n")


def cmd_solve(args) -> int:
    instance = None
    if args.instance is not None:
        instance = qkp.QkpInstance.load(args.instance)
        problem = qkp.to_constrained(instance)
    else:
        problem = constrained_from_json(json.loads(args.problem.read_text()))
    config = SolverConfig(
        tau_init=args.tau,
        tau_min=args.tau_min,
        t_max=args.tmax,
        epsilon=args.eps,
        non_improve_window=args.window,
        upper_bound=args.upper_bound,
        fisher_dual=args.fisher_dual,
        time_limit=args.time_limit,
    )
    if args.method == "naive":
        result = solve_naive(problem, config, instance=instance)
    else:
        defaults = {"num_samples": 500} if args.method == "sqa" else {}
        result = solve(problem, get_sampler(args.method), _sampler_config(args, **defaults), config, instance=instance)
    payload = result.to_json()
    if result.last_expectations is not None:
        payload["kkt"] = kkt_report(problem, result.mu, result.last_expectations).to_json()
    if instance is not None and result.best_value is not None:
        payload["profit"] = -result.best_value
    _write(json.dumps(payload, indent=1), args.out)
    return 0


def cmd_sample(args) -> int:
    problem = qubo_from_json(json.loads(args.qubo.read_text()))
    config = _sampler_config(args)
    if args.exact_mode:
        config = config.replace(exact_mode=args.exact_mode)
    samples = get_sampler(args.method)(problem, config)
    _write(json.dumps(samples.to_json()), args.out)
    return 0


def cmd_qkp_gen(args) -> int:
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for k in range(args.count):
        seed = args.seed + k
        inst = qkp.generate(args.n, args.delta, seed)
        path = args.out_dir / f"qkp_n{args.n}_d{args.delta}_s{seed}.json"
        inst.save(path)
        print(path)
    return 0


def cmd_compare_terms(args) -> int:
    rows = harness.term_rows(args.n, args.delta, args.seeds, args.base_seed, args.capacity)
    lines = ["n,delta,seed,om_terms,slack_terms"]
    lines += [f"{r['n']},{r['delta']},{r['seed']},{r['om_terms']},{r['slack_terms']}" for r in rows]
    _write("\n".join(lines), args.csv)
    return 0


def _load_plan(args) -> harness.ExperimentPlan:
    if args.plan is None:
        return harness.desk_plan()
    return harness.ExperimentPlan.load(args.plan)


def cmd_bench_run(args) -> int:
    plan = _load_plan(args)
    report = harness.run_plan(plan, args.out)
    files = harness.emit_report(report, args.out)
    sys.stdout.write(harness.summary_text(report))
    for path in files.values():
        print(path)
    return 1 if report.hard_failures else 0


def cmd_bench_curves(args) -> int:
    plan = _load_plan(args)
    curves = harness.iteration_curves(plan, args.out)
    lines = ["n,delta,method,t,mean_relative_error"]
    for (n, delta, method), values in sorted(curves.items()):
        lines += [f"{n},{delta},{method},{t},{v!r}" for t, v in enumerate(values)]
    _write("\n".join(lines), None if args.out is None else args.out / "curves.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lagsampler", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a constrained problem or QKP instance")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", type=Path, help="QKP instance JSON")
    src.add_argument("--problem", type=Path, help="constrained problem JSON")
    p.add_argument("--method", choices=["mcmc", "sqa", "exact", "naive"], default="mcmc")
    _add_sampler_flags(p)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--tmax", type=int, default=50)
    p.add_argument("--tau-min", type=float, default=0.01)
    p.add_argument("--eps", type=float, default=0.001)
    p.add_argument("--window", type=int, default=10, help="non-improving steps before halving tau")
    p.add_argument("--upper-bound", type=float)
    p.add_argument("--fisher-dual", action="store_true", help="weight residuals by mu in the step-size numerator")
    p.add_argument("--time-limit", type=float)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sample", help="draw samples from a QUBO JSON file")
    p.add_argument("--qubo", type=Path, required=True)
    p.add_argument("--method", choices=["mcmc", "sqa", "exact"], default="mcmc")
    p.add_argument("--exact-mode", choices=["boltzmann", "argmin"])
    _add_sampler_flags(p)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("qkp", help="quadratic knapsack instances")
    qsub = p.add_subparsers(dest="qkp_command", required=True)
    g = qsub.add_parser("gen", help="generate random instances")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--delta", type=float, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--out-dir", type=Path, default=Path("."))
    g.set_defaults(func=cmd_qkp_gen)

    def add_terms(p):
        p.add_argument("--n", type=int, nargs="+", default=[8, 16, 32, 64])
        p.add_argument("--delta", type=float, nargs="+", default=[0.2, 0.6, 1.0])
        p.add_argument("--seeds", type=int, default=100)
        p.add_argument("--base-seed", type=int, default=0)
        p.add_argument("--capacity", type=int, help="override every instance's capacity")
        p.add_argument("--csv", type=Path)
        p.set_defaults(func=cmd_compare_terms)

    add_terms(sub.add_parser("compare-terms", help="quadratic-term counts, multiplier vs slack QUBO"))

    p = sub.add_parser("bench", help="benchmark harness")
    bsub = p.add_subparsers(dest="bench_command", required=True)
    r = bsub.add_parser("run", help="run (or resume) a plan")
    r.add_argument("--plan", type=Path, help="plan JSON (default: desk-scale plan)")
    r.add_argument("--out", type=Path, required=True)
    r.set_defaults(func=cmd_bench_run)
    c = bsub.add_parser("curves", help="per-iteration error curves")
    c.add_argument("--plan", type=Path)
    c.add_argument("--out", type=Path)
    c.set_defaults(func=cmd_bench_curves)
    add_terms(bsub.add_parser("compare-terms", help="same as the top-level compare-terms"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"lagsampler: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
