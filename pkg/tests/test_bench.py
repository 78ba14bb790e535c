import json
from fractions import Fraction

import pytest

from dpledger import (
    ConfigInvalid,
    ZeroActual,
    relative_error,
)
from dpledger.bench import (
    EPS_UNIT,
    EpsilonSchedule,
    WorkloadConfig,
    export_report,
    export_sweep,
    generate_workload,
    run_scenario,
    scenario_config,
    sweep,
)
from dpledger.budget import exact


def _tiny_cfg(**kwargs):
    defaults = dict(
        name="tiny", n_writes=40, n_queries=20, repeat_ratio=0.25,
        epsilon_t=5.0,
        epsilon_schedule=EpsilonSchedule(kind="uniform", low=0.01, high=0.12),
        write_rate=10, query_rate=10, seed=13,
    )
    defaults.update(kwargs)
    return WorkloadConfig(**defaults)


# ---------------------------------------------------------------------------
# configuration

def test_config_validation_rejects_bad_values():
    with pytest.raises(ConfigInvalid):
        WorkloadConfig(quantity_range=(0, 100)).validate()
    with pytest.raises(ConfigInvalid):
        WorkloadConfig(quantity_range=(1, 200)).validate()
    with pytest.raises(ConfigInvalid):
        WorkloadConfig(repeat_ratio=1.5).validate()
    with pytest.raises(ConfigInvalid):
        WorkloadConfig(write_rate=0).validate()
    with pytest.raises(ConfigInvalid):
        WorkloadConfig(n_queries=10, n_repeats=10).validate()
    with pytest.raises(ConfigInvalid):
        WorkloadConfig(epsilon_t=0.0).validate()


def test_config_round_trips_through_dict():
    cfg = scenario_config("budget-155")
    again = WorkloadConfig.from_dict(cfg.to_dict())
    assert again == cfg


def test_config_rejects_unknown_fields():
    with pytest.raises(ConfigInvalid):
        WorkloadConfig.from_dict({"n_writes": 10, "bogus": 1})


def test_named_scenarios_resolve():
    for name in ("error-150", "budget-155", "throughput-755"):
        cfg = scenario_config(name, seed=42)
        assert cfg.seed == 42
    with pytest.raises(ConfigInvalid):
        scenario_config("missing")


def test_shipped_config_files_match_the_registry():
    import pathlib
    config_dir = pathlib.Path(__file__).resolve().parent.parent / "configs"
    for name in ("error-150", "budget-155", "throughput-755"):
        on_disk = json.loads((config_dir / f"{name}.json").read_text())
        assert WorkloadConfig.from_dict(on_disk) == scenario_config(name)


# ---------------------------------------------------------------------------
# workload generation

def test_default_workload_shape():
    schedule = generate_workload(WorkloadConfig(n_queries=0))
    assert len(schedule.writes) == 500
    customers = {tx.customer_name for _, tx in schedule.writes}
    assert customers == {"Bob", "Claire", "David", "Ali", "Alice"}
    assert all(1 <= tx.quantity <= 100 for _, tx in schedule.writes)


def test_zero_repeat_ratio_gives_distinct_categories():
    cfg = _tiny_cfg(repeat_ratio=0.0)
    schedule = generate_workload(cfg)
    keys = [plan.key for plan in schedule.queries]
    assert len(set(keys)) == len(keys)


def test_repeat_count_realized_exactly():
    for ratio, n in ((0.25, 20), (0.5, 31), (0.9, 40)):
        cfg = _tiny_cfg(n_writes=80, n_queries=n, repeat_ratio=ratio)
        schedule = generate_workload(cfg)
        repeats = [p for p in schedule.queries if p.repeat_of is not None]
        assert len(repeats) == int(ratio * n + 0.5)


def test_repeats_follow_their_source():
    schedule = generate_workload(_tiny_cfg(repeat_ratio=0.5, n_queries=30, n_writes=80))
    seen = set()
    for i, plan in enumerate(schedule.queries):
        if plan.repeat_of is not None:
            assert plan.repeat_of < i
            assert plan.key == schedule.queries[plan.repeat_of].key
            assert schedule.queries[plan.repeat_of].repeat_of is None or \
                schedule.queries[plan.repeat_of].key in seen
        seen.add(plan.key)


def test_workload_is_deterministic_per_seed():
    a = generate_workload(_tiny_cfg())
    b = generate_workload(_tiny_cfg())
    assert a.writes == b.writes
    assert a.queries == b.queries
    c = generate_workload(_tiny_cfg(seed=14))
    assert c.queries != a.queries


def test_calibrated_epsilons_hit_exact_totals():
    cfg = scenario_config("budget-155")
    schedule = generate_workload(cfg)
    fresh = [p.eps_f for p in schedule.queries if p.repeat_of is None]
    reps = [p.eps_f for p in schedule.queries if p.repeat_of is not None]
    assert len(fresh) == 100 and len(reps) == 55
    assert all(0.01 <= e <= 0.12 for e in fresh + reps)
    # grid values sum exactly in float arithmetic
    assert sum(fresh) == round(5.7 / EPS_UNIT) * EPS_UNIT
    assert sum(reps) == round(3.2 / EPS_UNIT) * EPS_UNIT


def test_configured_attacks_land_in_the_report():
    report = run_scenario(_tiny_cfg(attacks=("averaging",)))
    assert len(report["attacks"]) == 1
    entry = report["attacks"][0]
    assert entry["kind"] == "averaging"
    assert entry["reuse"]["details"]["distinct_values"] == 1
    assert entry["naive"]["details"]["distinct_values"] == 50
    # attack entries survive the JSON round trip
    json.dumps(report)


def test_custom_topology_from_config():
    cfg = _tiny_cfg(
        n_queries=4, repeat_ratio=0.0,
        orgs=(("retailer", ("peer0.retailer",)),
              ("distributor", ("peer0.distributor", "peer1.distributor"))),
        endorsement_policy=2,
    )
    report = run_scenario(cfg)
    assert report["naive"]["rejected"] == 0
    assert report["reuse"]["committed"] == 40 + 4
    bad = cfg.to_dict()
    bad["endorsement_policy"] = 5
    with pytest.raises(ConfigInvalid):
        WorkloadConfig.from_dict(bad)


def test_weighted_schedule_assigns_per_requester_budgets():
    cfg = _tiny_cfg(
        n_queries=20, repeat_ratio=0.0, epsilon_t=1.0,
        requesters=("manufacturer", "distributor"),
        epsilon_schedule=EpsilonSchedule(
            kind="weighted", weights={"manufacturer": 2.0, "distributor": 1.0}),
    )
    schedule = generate_workload(cfg)
    by_requester = {}
    for plan in schedule.queries:
        by_requester.setdefault(plan.tx.requester_id, set()).add(plan.eps_f)
    assert len(by_requester["manufacturer"]) == 1
    assert len(by_requester["distributor"]) == 1
    manu = by_requester["manufacturer"].pop()
    dist = by_requester["distributor"].pop()
    assert manu == pytest.approx(2 * dist, rel=1e-9)
    # the full stream is spendable within the threshold
    report = run_scenario(cfg)
    assert report["naive"]["rejected"] == 0
    assert report["naive_eps_sum"] == pytest.approx(1.0, abs=1e-9)


def test_calibrated_infeasible_totals_rejected():
    cfg = _tiny_cfg(
        n_queries=10, n_repeats=2,
        epsilon_schedule=EpsilonSchedule(kind="calibrated", low=0.01, high=0.12,
                                         fresh_total=50.0, repeat_total=0.1),
    )
    with pytest.raises(ConfigInvalid):
        generate_workload(cfg)


# ---------------------------------------------------------------------------
# relative error

def test_relative_error_arithmetic():
    assert relative_error(100.0, 97.0) == pytest.approx(3.0)
    assert relative_error(50.0, 50.0) == 0.0


def test_relative_error_rejects_zero_actual():
    with pytest.raises(ZeroActual):
        relative_error(0.0, 5.0)


# ---------------------------------------------------------------------------
# scenario runs

def test_reuse_curve_never_exceeds_naive_and_tracks_repeats():
    report = run_scenario(_tiny_cfg())
    rows = report["rows"]
    repeats_so_far = 0
    for row in rows:
        assert row["cum_eps_reuse"] <= row["cum_eps_naive"] + 1e-12
        if row["repeat_of"] is not None:
            repeats_so_far += 1
        if repeats_so_far == 0:
            assert row["cum_eps_reuse"] == row["cum_eps_naive"]
        else:
            assert row["cum_eps_reuse"] < row["cum_eps_naive"]


def test_reuse_saves_exactly_the_repeated_budget():
    report = run_scenario(_tiny_cfg())
    repeated = [row["eps_f"] for row in report["rows"] if row["repeat_of"] is not None]
    expected = sum((exact(e) for e in repeated), Fraction(0))
    naive = exact(report["naive_eps_sum"])
    reuse = exact(report["reuse_eps_sum"])
    assert naive - reuse == expected


def test_zero_repeats_means_zero_savings():
    report = run_scenario(_tiny_cfg(repeat_ratio=0.0))
    assert report["savings_pct"] == 0.0
    assert report["naive_eps_sum"] == report["reuse_eps_sum"]


def test_scenario_reports_are_deterministic():
    a = run_scenario(_tiny_cfg())
    b = run_scenario(_tiny_cfg())
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_dp_disabled_baseline_has_zero_error():
    report = run_scenario(_tiny_cfg(dp_enabled=False))
    assert report["reuse"]["mean_relative_error"] == 0.0
    assert report["reuse"]["accuracy"] == 100.0
    assert report["naive_eps_sum"] == 0.0


def test_budget_155_hits_published_totals():
    report = run_scenario(scenario_config("budget-155"))
    assert report["naive_eps_sum"] == pytest.approx(8.9, abs=0.05)
    assert report["reuse_eps_sum"] == pytest.approx(5.7, abs=0.05)
    assert report["savings_pct"] == pytest.approx(35.96, abs=1.0)
    assert len(report["rows"]) == 155
    # every query, fresh or reused, lands in the on-ledger query log
    assert report["reuse"]["committed"] + report["reuse"]["cached"] == 500 + 155


def test_budget_155_query_log_holds_every_query():
    from dpledger.bench import _execute
    cfg = scenario_config("budget-155")
    res = _execute(cfg, generate_workload(cfg), reuse_enabled=True)
    log = res.channel.state.query_log
    assert len(log) == 155
    assert sum(1 for r in log if not r.response.reused) == 100
    # reuse entries carry the budget spent on the answer they repeat
    assert all(r.epsilon_spent > 0 for r in log)


def test_throughput_755_scenario_runs_with_rate_series():
    report = run_scenario(scenario_config("throughput-755"))
    rows = report["performance"]
    assert [r["rate"] for r in rows] == [10, 20, 30, 40, 50]
    assert all(r["query_committed"] == 755 for r in rows)
    tp = [r["query_throughput"] for r in rows]
    assert all(a < b for a, b in zip(tp, tp[1:]))


def test_sweep_errors_decrease_and_match_formula():
    result = sweep(scenario_config("error-150"), [1, 2, 3])
    errs = [row["mean_relative_error"] for row in result["rows"]]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    for row in result["rows"]:
        diff = abs(row["mean_relative_error"] - row["expected_error"])
        assert diff <= 3 * row["expected_error_se"]


# ---------------------------------------------------------------------------
# export

def test_export_report_files_and_consistency(tmp_path):
    report = run_scenario(_tiny_cfg())
    paths = export_report(report, tmp_path / "out")
    names = {p.name for p in paths}
    assert {"report.json", "summary.json", "budget_curve.csv",
            "relative_errors.csv"} <= names

    # summary savings recomputes from the last budget-curve row
    curve_lines = (tmp_path / "out" / "budget_curve.csv").read_text().splitlines()
    last = curve_lines[-1].split(",")
    naive, reuse = float(last[1]), float(last[2])
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["savings_pct"] == pytest.approx((naive - reuse) / naive * 100.0)


def test_re_export_is_byte_identical(tmp_path):
    report = run_scenario(_tiny_cfg())
    export_report(report, tmp_path / "a")
    loaded = json.loads((tmp_path / "a" / "report.json").read_text())
    export_report(loaded, tmp_path / "b")
    for path in sorted((tmp_path / "a").iterdir()):
        assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes()


def test_sweep_export_writes_one_row_per_epsilon(tmp_path):
    result = sweep(scenario_config("error-150", seed=3), [1, 2])
    export_sweep(result, tmp_path)
    lines = (tmp_path / "error_vs_epsilon.csv").read_text().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("epsilon_t,")


def test_performance_scan_rows():
    cfg = _tiny_cfg(rate_sweep=(5, 10))
    report = run_scenario(cfg)
    rows = report["performance"]
    assert [r["rate"] for r in rows] == [5, 10]
    for row in rows:
        assert row["write_committed"] == 40
        assert row["query_throughput"] > 0
