import csv
import io
import json
import time

import numpy as np
import pytest

from lagsampler import harness, qkp
from lagsampler.harness import ExperimentPlan, ExperimentReport


def greedy_plan(**kw):
    base = dict(sizes=[8], densities=[0.2, 0.6, 1.0], instances_per_cell=10, methods=["greedy"])
    base.update(kw)
    return ExperimentPlan(**base)


def small_iterative_plan(**kw):
    base = dict(
        sizes=[6],
        densities=[0.6],
        instances_per_cell=4,
        methods=["om_mcmc", "naive", "greedy"],
        samplers={"om_mcmc": {"sweeps": 10, "num_samples": 100}},
        solver={"t_max": 8},
    )
    base.update(kw)
    return ExperimentPlan(**base)


def test_greedy_plan_is_fast():
    start = time.perf_counter()
    report = harness.run_plan(greedy_plan())
    assert time.perf_counter() - start < 1.0
    assert len(report.summary) == 3
    assert all(s["instances"] == 10 for s in report.summary)


def test_plan_validation():
    with pytest.raises(ValueError):
        ExperimentPlan(methods=["bogus"])
    with pytest.raises(ValueError):
        ExperimentPlan(instances_per_cell=0)
    with pytest.raises(ValueError):
        ExperimentPlan.from_json({"sizes": [8], "colour": "red"})


def test_plan_json_round_trip(tmp_path):
    plan = small_iterative_plan()
    (tmp_path / "plan.json").write_text(json.dumps(plan.to_json()))
    assert ExperimentPlan.load(tmp_path / "plan.json") == plan


def test_seeds_are_distinct():
    seeds = {harness.instance_seed(0, n, d, i) for n in (8, 16) for d in range(3) for i in range(100)}
    assert len(seeds) == 600
    assert harness.method_seed(5, "om_mcmc") != harness.method_seed(5, "om_sqa")


def test_deterministic_csv():
    plan = small_iterative_plan()
    a = harness.report_csv(harness.run_plan(plan))
    b = harness.report_csv(harness.run_plan(plan))
    assert a == b


def test_csv_row_count():
    plan = small_iterative_plan()
    report = harness.run_plan(plan)
    rows = list(csv.DictReader(io.StringIO(harness.report_csv(report))))
    cells = len(plan.sizes) * len(plan.densities)
    iterative = sum(m in harness.ITERATIVE for m in plan.methods)
    t_max = plan.solver_config().t_max
    assert len(rows) == cells * len(plan.methods) + cells * iterative * (t_max + 1)
    assert list(rows[0]) == list(harness.REPORT_COLUMNS)


def test_empty_report_has_header_only():
    text = harness.report_csv(ExperimentReport())
    assert text == ",".join(harness.REPORT_COLUMNS) + "\n"


def test_report_json_round_trip():
    report = harness.run_plan(greedy_plan(instances_per_cell=3))
    back = ExperimentReport.from_json(json.loads(json.dumps(report.to_json())))
    assert harness.report_csv(back) == harness.report_csv(report)
    with pytest.raises(ValueError):
        ExperimentReport.from_json({"schema": 99})


def test_resume_skips_finished_cells(tmp_path, monkeypatch):
    plan = small_iterative_plan()
    first = harness.run_plan(plan, tmp_path)
    calls = []
    original = harness.run_cell
    monkeypatch.setattr(harness, "run_cell", lambda *a: calls.append(a) or original(*a))
    second = harness.run_plan(plan, tmp_path)
    assert calls == []
    assert harness.report_csv(first) == harness.report_csv(second)
    # a changed solver setting invalidates the iterative cells only
    harness.run_plan(small_iterative_plan(solver={"t_max": 9}), tmp_path)
    assert sorted(c[3] for c in calls) == ["naive", "om_mcmc"]


def test_exact_rate_matches_instances():
    report = harness.run_plan(small_iterative_plan())
    for s in report.summary:
        rows = [r for r in report.instances if r["method"] == s["method"] and r["n"] == s["n"] and r["delta"] == s["delta"]]
        assert s["exact_rate"] == pytest.approx(np.mean([r["exact"] for r in rows]))
        assert s["mean_relative_error"] == pytest.approx(np.mean([r["relative_error"] for r in rows]))
        assert s["certified"]


def test_curves_start_at_one_and_never_increase():
    report = harness.run_plan(small_iterative_plan())
    curves = {}
    for c in report.curves:
        curves.setdefault(c["method"], []).append(c["mean_relative_error"])
    assert set(curves) == {"om_mcmc", "naive"}
    for values in curves.values():
        assert values[0] == 1.0
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_best_so_far_errors():
    errs = harness._best_so_far_errors([None, 10, 8, 20], 6, 20)
    assert errs == [1.0, 1.0, 0.5, 0.5, 0.0, 0.0, 0.0]


def test_failures_are_recorded(monkeypatch, tmp_path):
    def boom(plan, method, instance, seed):
        raise RuntimeError("sampler exploded")

    monkeypatch.setattr(harness, "_run_method", boom)
    report = harness.run_plan(greedy_plan(instances_per_cell=2, densities=[0.2]))
    assert report.hard_failures
    rows = [r for r in report.instances]
    assert all("sampler exploded" in r["error"] for r in rows)
    assert all(r["relative_error"] is None for r in rows)


def test_uncertified_reference_beyond_oracle(monkeypatch):
    def unavailable(instance, method="auto"):
        raise qkp.OracleUnavailable("too big")

    monkeypatch.setattr(qkp, "exact_solve", unavailable)
    report = harness.run_plan(greedy_plan(instances_per_cell=2, densities=[0.2]))
    assert not report.summary[0]["certified"]
    assert report.summary[0]["mean_relative_error"] == 0.0


def test_emit_report(tmp_path):
    files = harness.emit_report(harness.run_plan(greedy_plan(instances_per_cell=2)), tmp_path)
    assert set(p.name for p in files.values()) == {
        "report.csv", "instances.csv", "terms.csv", "summary.json", "summary.txt", "timings.csv"
    }
    terms = list(csv.DictReader(io.StringIO(files["terms"].read_text())))
    assert len(terms) == 6 and all(int(t["slack_terms"]) >= int(t["om_terms"]) for t in terms)


def test_emit_report_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="could not write"):
        harness.emit_report(ExperimentReport(), blocker / "sub")


def test_term_rows_capacity_override():
    rows = harness.term_rows([8], [1.0], 3, capacity=50)
    assert [(r["om_terms"], r["slack_terms"]) for r in rows] == [(28, 91)] * 3
