"""Batch benchmark runner for the quadratic knapsack comparison.

Work is split into (N, density, method) cells.  Each finished cell is written
to ``<out>/cells/<hash>.json`` where the hash covers everything that
determines its contents, so rerunning a plan skips finished cells.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import qkp
from .samplers import SamplerConfig, sample_exact, sample_mcmc, sample_sqa
from .slack import count_comparison
from .solver import SolverConfig, kkt_report, solve, solve_naive

log = logging.getLogger(__name__)

SCHEMA_VERSION = 2
METHODS = ("om_mcmc", "om_sqa", "om_exact", "naive", "greedy")
ITERATIVE = ("om_mcmc", "om_sqa", "om_exact", "naive")
REPORT_COLUMNS = (
    "schema", "kind", "n", "delta", "method", "t", "instances", "mean_relative_error",
    "std_error", "exact_rate", "mean_iterations", "certified", "failures",
)
INSTANCE_COLUMNS = (
    "n", "delta", "index", "seed", "method", "profit", "optimum", "certified",
    "relative_error", "exact", "iterations", "stop_reason", "mu_nonnegative", "kkt_ratio", "error",
)

DEFAULT_SAMPLERS = {
    "om_mcmc": {"beta": 0.1, "num_samples": 1000, "sweeps": 1000},
    "om_sqa": {"beta": 0.1, "num_samples": 500, "sweeps": 1000, "trotter": 2},
    "om_exact": {"beta": 0.1, "num_samples": 1000, "exact_mode": "boltzmann"},
}


@dataclass
class ExperimentPlan:
    sizes: list[int] = field(default_factory=lambda: [8, 16, 32, 64])
    densities: list[float] = field(default_factory=lambda: [0.2, 0.6, 1.0])
    instances_per_cell: int = 100
    methods: list[str] = field(default_factory=lambda: ["om_mcmc", "om_sqa", "naive", "greedy"])
    samplers: dict[str, dict] = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_SAMPLERS.items()})
    solver: dict = field(default_factory=dict)
    base_seed: int = 0
    time_limit: float | None = 60.0

    def __post_init__(self):
        if not self.sizes or not self.densities or not self.methods:
            raise ValueError("sizes, densities and methods must be non-empty")
        if self.instances_per_cell < 1:
            raise ValueError("instances_per_cell must be >= 1")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        merged = {k: dict(v) for k, v in DEFAULT_SAMPLERS.items()}
        for k, v in self.samplers.items():
            merged.setdefault(k, {}).update(v)
        self.samplers = merged

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentPlan":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown plan keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentPlan":
        return cls.from_json(json.loads(Path(path).read_text()))

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**{"time_limit": self.time_limit, **self.solver})

    def sampler_config(self, method: str, seed: int) -> SamplerConfig:
        return SamplerConfig(**{**self.samplers.get(method, {}), "seed": seed})


def desk_plan(**overrides) -> ExperimentPlan:
    """Small sizes certified by the in-repo oracle; sweep budget cut for a single CPU."""
    plan = dict(
        sizes=[8, 16],
        densities=[0.2, 0.6, 1.0],
        instances_per_cell=100,
        methods=["om_mcmc", "om_sqa", "naive", "greedy"],
        samplers={"om_mcmc": {"sweeps": 20}, "om_sqa": {"sweeps": 20}},
    )
    plan.update(overrides)
    return ExperimentPlan(**plan)


def instance_seed(base_seed: int, n: int, density_index: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, n, density_index, index]).generate_state(1)[0])


def method_seed(instance_seed_: int, method: str) -> int:
    tag = zlib.crc32(method.encode())
    return int(np.random.SeedSequence([instance_seed_, tag]).generate_state(1)[0])


def _cell_key(plan: ExperimentPlan, n: int, density_index: int, method: str) -> str:
    payload = {
        "schema": SCHEMA_VERSION,
        "n": n,
        "delta": plan.densities[density_index],
        "density_index": density_index,
        "instances": plan.instances_per_cell,
        "base_seed": plan.base_seed,
        "method": method,
        "sampler": plan.samplers.get(method) if method.startswith("om_") else None,
        "solver": plan.solver if method in ITERATIVE else None,
        "time_limit": plan.time_limit if method in ITERATIVE else None,
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:20]


def _run_method(plan: ExperimentPlan, method: str, instance: qkp.QkpInstance, seed: int) -> dict:
    if method == "greedy":
        _, profit = qkp.greedy(instance)
        return {"profit": profit, "iterations": 0, "stop_reason": "", "curve": None}
    problem = qkp.to_constrained(instance)
    config = plan.solver_config()
    if method == "naive":
        result = solve_naive(problem, config, instance=instance)
    else:
        sampler = {"om_mcmc": sample_mcmc, "om_sqa": sample_sqa, "om_exact": sample_exact}[method]
        result = solve(problem, sampler, plan.sampler_config(method, seed), config, instance=instance)
    curve = [None if h.best_feasible_value is None else -h.best_feasible_value for h in result.history]
    profit = None if result.best_value is None else int(round(-result.best_value))
    kkt_ratio = None
    if result.stop_reason == "epsilon":
        kkt = kkt_report(problem, result.mu, result.last_expectations)
        kkt_ratio = float(np.max(kkt.residual / np.abs(problem.bounds)))
    return {
        "profit": profit,
        "iterations": result.iterations,
        "stop_reason": result.stop_reason,
        "curve": curve,
        "mu_nonnegative": all(m >= 0 for h in result.history for m in h.mu) and bool(np.all(result.mu >= 0)),
        "kkt_ratio": kkt_ratio,
    }


def run_cell(plan: ExperimentPlan, n: int, density_index: int, method: str) -> dict:
    delta = plan.densities[density_index]
    rows = []
    for index in range(plan.instances_per_cell):
        seed = instance_seed(plan.base_seed, n, density_index, index)
        row = {"index": index, "seed": seed}
        try:
            instance = qkp.generate(n, delta, seed)
            row.update(_run_method(plan, method, instance, method_seed(seed, method)))
        except Exception as exc:  # recorded per cell, the batch keeps going
            log.warning("n=%d delta=%s method=%s index=%d failed: %s", n, delta, method, index, exc)
            row.update({"profit": None, "iterations": 0, "stop_reason": "error", "curve": None,
                        "error": f"{type(exc).__name__}: {exc}"})
        rows.append(row)
    return {"n": n, "delta": delta, "method": method, "rows": rows}


def _optima(plan: ExperimentPlan, n: int, density_index: int) -> list[int | None]:
    out = []
    for index in range(plan.instances_per_cell):
        seed = instance_seed(plan.base_seed, n, density_index, index)
        try:
            out.append(qkp.exact_solve(qkp.generate(n, plan.densities[density_index], seed))[1])
        except qkp.OracleUnavailable:
            out.append(None)
    return out


@dataclass
class ExperimentReport:
    summary: list[dict] = field(default_factory=list)
    curves: list[dict] = field(default_factory=list)
    instances: list[dict] = field(default_factory=list)
    terms: list[dict] = field(default_factory=list)
    timings: list[dict] = field(default_factory=list)

    @property
    def hard_failures(self) -> list[dict]:
        return [s for s in self.summary if s["failures"] > 0]

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "summary": self.summary,
            "curves": self.curves,
            "instances": self.instances,
            "terms": self.terms,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentReport":
        if data.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {data.get('schema')!r}")
        return cls(data["summary"], data["curves"], data["instances"], data["terms"])


def _best_so_far_errors(curve, t_max: int, optimum: float) -> list[float]:
    """Relative error of the best feasible value known after each iteration (index 0 = before any)."""
    errs = [1.0]
    best = None
    last = 1.0
    for t in range(1, t_max + 1):
        if curve is not None and t <= len(curve):
            value = curve[t - 1]
            if value is not None and (best is None or value > best):
                best = value
            last = 1.0 if best is None else qkp.relative_error(best, optimum)
        errs.append(last)
    return errs


def _sem(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(values.size))


def run_plan(plan: ExperimentPlan, out_dir: str | Path | None = None, with_curves: bool = True) -> ExperimentReport:
    """Run (or resume) every cell of the plan and aggregate the metrics."""
    cache = None
    if out_dir is not None:
        cache = Path(out_dir) / "cells"
        cache.mkdir(parents=True, exist_ok=True)
    report = ExperimentReport()
    t_max = plan.solver_config().t_max
    for n in sorted(plan.sizes):
        for d_idx, delta in enumerate(plan.densities):
            cells = {}
            for method in plan.methods:
                key = _cell_key(plan, n, d_idx, method)
                path = None if cache is None else cache / f"{key}.json"
                if path is not None and path.exists():
                    cells[method] = json.loads(path.read_text())
                    continue
                log.info("running n=%d delta=%s method=%s", n, delta, method)
                start = time.perf_counter()
                cell = run_cell(plan, n, d_idx, method)
                cell["wall_time"] = time.perf_counter() - start
                cells[method] = cell
                if path is not None:
                    path.write_text(json.dumps(cell))
            optima_path = None if cache is None else cache / f"optima-{_cell_key(plan, n, d_idx, 'exact')}.json"
            if optima_path is not None and optima_path.exists():
                optima = json.loads(optima_path.read_text())
            else:
                optima = _optima(plan, n, d_idx)
                if optima_path is not None:
                    optima_path.write_text(json.dumps(optima))
            _aggregate(report, plan, n, delta, optima, cells, t_max, with_curves)
            for index in range(plan.instances_per_cell):
                seed = instance_seed(plan.base_seed, n, d_idx, index)
                om, sl = count_comparison(qkp.generate(n, delta, seed))
                report.terms.append({"n": n, "delta": delta, "seed": seed, "om_terms": om, "slack_terms": sl})
    return report


def _aggregate(report, plan, n, delta, optima, cells, t_max, with_curves):
    count = plan.instances_per_cell
    references, certified = [], []
    for index in range(count):
        if optima[index] is not None:
            references.append(optima[index])
            certified.append(True)
            continue
        found = [c["rows"][index]["profit"] for c in cells.values() if c["rows"][index]["profit"] is not None]
        references.append(max(found) if found else None)
        certified.append(False)
    for method in plan.methods:
        cell = cells[method]
        errors, iterations, failures = [], [], 0
        curve_errors = []
        for index, row in enumerate(cell["rows"]):
            ref = references[index]
            if "error" in row:
                failures += 1
            if ref is None or ref == 0 or "error" in row:
                # crashed runs are counted under failures, not averaged in
                err = None
            else:
                err = qkp.relative_error(row["profit"], ref)
                errors.append(err)
                iterations.append(row["iterations"])
                if with_curves and method in ITERATIVE:
                    curve_errors.append(_best_so_far_errors(row.get("curve"), t_max, ref))
            report.instances.append({
                "n": n, "delta": delta, "index": index, "seed": row["seed"], "method": method,
                "profit": row["profit"], "optimum": ref, "certified": certified[index],
                "relative_error": err, "exact": None if err is None else err == 0.0,
                "iterations": row["iterations"], "stop_reason": row["stop_reason"],
                "mu_nonnegative": row.get("mu_nonnegative"), "kkt_ratio": row.get("kkt_ratio"),
                "error": row.get("error", ""),
            })
        errs = np.array(errors, dtype=np.float64)
        report.summary.append({
            "n": n, "delta": delta, "method": method, "instances": int(errs.size),
            "mean_relative_error": float(errs.mean()) if errs.size else None,
            "std_error": _sem(errs),
            "exact_rate": float((errs == 0).mean()) if errs.size else None,
            "mean_iterations": float(np.mean(iterations)) if iterations else None,
            "certified": all(certified),
            "failures": failures,
        })
        if "wall_time" in cell:
            report.timings.append({"n": n, "delta": delta, "method": method, "wall_time": cell["wall_time"]})
        if curve_errors:
            mean_curve = np.mean(np.array(curve_errors), axis=0)
            for t, value in enumerate(mean_curve):
                report.curves.append({"n": n, "delta": delta, "method": method, "t": t,
                                      "mean_relative_error": float(value)})


def iteration_curves(plan: ExperimentPlan, out_dir=None) -> dict[tuple[int, float, str], list[float]]:
    """Per (n, delta, method): mean best-so-far relative error at each iteration."""
    report = run_plan(dataclasses.replace(plan, methods=[m for m in plan.methods if m in ITERATIVE]), out_dir)
    curves: dict[tuple[int, float, str], list[float]] = {}
    for row in report.curves:
        curves.setdefault((row["n"], row["delta"], row["method"]), []).append(row["mean_relative_error"])
    return curves


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(round(value, 12))
    return str(value)


def report_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for s in report.summary:
        writer.writerow([_fmt(x) for x in (
            SCHEMA_VERSION, "summary", s["n"], s["delta"], s["method"], None, s["instances"],
            s["mean_relative_error"], s["std_error"], s["exact_rate"], s["mean_iterations"],
            s["certified"], s["failures"],
        )])
    for c in report.curves:
        writer.writerow([_fmt(x) for x in (
            SCHEMA_VERSION, "curve", c["n"], c["delta"], c["method"], c["t"], None,
            c["mean_relative_error"], None, None, None, None, None,
        )])
    return buf.getvalue()


def _table_csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def summary_text(report: ExperimentReport) -> str:
    lines = [f"{'n':>4} {'delta':>6} {'method':>8} {'rel.err':>10} {'s.e.':>9} {'exact':>6} {'iters':>6} cert fail"]
    for s in report.summary:
        mre = "-" if s["mean_relative_error"] is None else f"{s['mean_relative_error']:.5f}"
        rate = "-" if s["exact_rate"] is None else f"{s['exact_rate']:.2f}"
        iters = "-" if s["mean_iterations"] is None else f"{s['mean_iterations']:.1f}"
        lines.append(
            f"{s['n']:>4} {s['delta']:>6} {s['method']:>8} {mre:>10} {s['std_error']:>9.5f} {rate:>6} "
            f"{iters:>6} {'yes' if s['certified'] else 'no':>4} {s['failures']:>4}"
        )
    return "\n".join(lines) + "\n"


def emit_report(report: ExperimentReport, out_dir: str | Path) -> dict[str, Path]:
    """Write ``report.csv``, ``instances.csv``, ``terms.csv``, ``summary.json``,
    ``summary.txt`` and ``timings.csv``.

    Everything except ``timings.csv`` is a pure function of the plan.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "report": out / "report.csv",
            "instances": out / "instances.csv",
            "terms": out / "terms.csv",
            "summary_json": out / "summary.json",
            "summary_text": out / "summary.txt",
            "timings": out / "timings.csv",
        }
        files["report"].write_text(report_csv(report))
        files["instances"].write_text(_table_csv(report.instances, INSTANCE_COLUMNS))
        files["terms"].write_text(_table_csv(report.terms, ("n", "delta", "seed", "om_terms", "slack_terms")))
        files["summary_json"].write_text(json.dumps(report.to_json(), indent=1, sort_keys=True))
        files["summary_text"].write_text(summary_text(report))
        files["timings"].write_text(_table_csv(report.timings, ("n", "delta", "method", "wall_time")))
    except OSError as exc:
        raise OSError(f"could not write report to {out}: {exc}") from exc
    return files


def term_rows(sizes, densities, seeds: int, base_seed: int = 0, capacity: int | None = None) -> list[dict]:
    """Quadratic-term counts for freshly generated instances (optionally with a fixed capacity)."""
    rows = []
    for n in sizes:
        for d_idx, delta in enumerate(densities):
            for index in range(seeds):
                seed = instance_seed(base_seed, n, d_idx, index)
                inst = qkp.generate(n, delta, seed)
                if capacity is not None:
                    inst = dataclasses.replace(inst, capacity=capacity)
                om, sl = count_comparison(inst)
                rows.append({"n": n, "delta": delta, "seed": seed, "om_terms": om, "slack_terms": sl})
    return rows
