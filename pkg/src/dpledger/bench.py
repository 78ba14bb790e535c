"""Workload generation, scenario execution, metric computation, and export.

A scenario runs the full network pipeline twice on identical schedules
and seeds: once with the cached-answer path disabled (fresh noise for
every query, the traditional baseline) and once with budget reuse
enabled. The report carries per-query relative errors, both cumulative
budget curves, the savings percentage, and flow metrics.

Per-query budget values are emitted on a dyadic grid (multiples of
2**-20) so that cumulative float sums stay exact.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .adversary import (
    AttackReport,
    BackgroundKnowledge,
    composition_attack,
    linking_attack,
    linking_trials,
    repeated_query_averaging,
)
from .budget import RequesterProfile, TrustClass, allocate_equal, allocate_weighted
from .chaincode import categorize
from .errors import BudgetExhausted, ConfigInvalid, IoFailure, ZeroActual
from .laplace import SensitivitySpec, laplace_scale
from .ledger import export_blocks, export_transactions, write_text
from .network import Network, ReceiptStatus
from .transactions import (
    Aggregate,
    CategoryKey,
    QueryPredicate,
    QueryTransaction,
    WriteTransaction,
    normalize,
)

# Grid step for generated epsilon values; float sums of grid multiples
# this small are exact up to budgets far beyond any scenario here.
EPS_UNIT = 2.0 ** -20

DEFAULT_CUSTOMERS = ("Bob", "Claire", "David", "Ali", "Alice")
DEFAULT_PRODUCTS = (
    "bolt", "bearing", "gasket", "valve", "sensor", "cable", "motor",
    "filter", "switch", "pump", "relay", "gear", "clamp", "fuse",
    "hinge", "nozzle", "washer", "spring", "seal", "rotor",
)
DEFAULT_COLORS = ("red", "blue", "green", "black", "white", "yellow", "orange", "grey")

LOADER_CLIENT = "loader-app"


@dataclass(frozen=True)
class EpsilonSchedule:
    """How per-query budgets are assigned across the query stream.

    kinds:
      equal      - threshold split equally across the stream
      weighted   - threshold split in proportion to requester weights
      fixed      - one explicit value for every query
      uniform    - seeded grid draws in [low, high]
      calibrated - grid draws adjusted so fresh queries sum to
                   fresh_total and repeats to repeat_total exactly
    """

    kind: str = "equal"
    value: float = 0.0
    low: float = 0.01
    high: float = 0.12
    fresh_total: float = 0.0
    repeat_total: float = 0.0
    weights: Optional[Dict[str, float]] = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "value": self.value, "low": self.low,
            "high": self.high, "fresh_total": self.fresh_total,
            "repeat_total": self.repeat_total, "weights": self.weights,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpsilonSchedule":
        return cls(**{k: d[k] for k in
                      ("kind", "value", "low", "high", "fresh_total",
                       "repeat_total", "weights")
                      if k in d})


@dataclass
class WorkloadConfig:
    """Everything a scenario run depends on; validated up front."""

    name: str = "custom"
    n_writes: int = 500
    customers: Tuple[str, ...] = DEFAULT_CUSTOMERS
    products: Tuple[str, ...] = DEFAULT_PRODUCTS
    colors: Tuple[str, ...] = DEFAULT_COLORS
    quantity_range: Tuple[int, int] = (1, 100)
    n_queries: int = 150
    repeat_ratio: float = 0.0
    n_repeats: Optional[int] = None
    sum_only: bool = True
    requesters: Tuple[str, ...] = ("distributor-a",)
    epsilon_t: float = 1.0
    epsilon_schedule: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    write_rate: int = 25
    query_rate: int = 25
    rate_sweep: Optional[Tuple[int, ...]] = None
    attacks: Tuple[str, ...] = ()
    dp_enabled: bool = True
    orgs: Optional[Tuple[Tuple[str, Tuple[str, ...]], ...]] = None
    batch_size: int = 10
    batch_timeout: int = 2
    endorsement_policy: int = 1
    sensitivity_bound: float = 100.0
    seed: int = 7

    def resolved_repeats(self) -> int:
        if self.n_repeats is not None:
            return self.n_repeats
        return int(self.repeat_ratio * self.n_queries + 0.5)

    def validate(self) -> None:
        lo, hi = self.quantity_range
        if not (1 <= lo <= hi <= 100):
            raise ConfigInvalid(f"quantity_range {self.quantity_range} not within [1, 100]")
        if self.n_writes < 1:
            raise ConfigInvalid("n_writes must be >= 1")
        if self.n_queries < 0:
            raise ConfigInvalid("n_queries must be >= 0")
        if not 0.0 <= self.repeat_ratio <= 1.0:
            raise ConfigInvalid(f"repeat_ratio {self.repeat_ratio} outside [0, 1]")
        reps = self.resolved_repeats()
        if self.n_queries > 0 and not 0 <= reps <= self.n_queries - 1:
            raise ConfigInvalid(
                f"{reps} repeats impossible for {self.n_queries} queries "
                "(the first query of a category is always fresh)"
            )
        if self.write_rate < 1 or self.query_rate < 1:
            raise ConfigInvalid("transaction rates must be positive")
        if self.rate_sweep is not None and any(r < 1 for r in self.rate_sweep):
            raise ConfigInvalid("rate_sweep entries must be positive")
        if self.epsilon_t <= 0:
            raise ConfigInvalid("epsilon_t must be positive")
        if not self.customers or not self.products or not self.colors:
            raise ConfigInvalid("customers, products, and colors must be non-empty")
        if not self.requesters or len(set(self.requesters)) != len(self.requesters):
            raise ConfigInvalid("requesters must be non-empty and unique")
        if self.orgs is not None:
            if not self.orgs or any(not peer_ids for _, peer_ids in self.orgs):
                raise ConfigInvalid("every org needs at least one peer")
            n_peers = sum(len(peer_ids) for _, peer_ids in self.orgs)
            if not 1 <= self.endorsement_policy <= n_peers:
                raise ConfigInvalid(
                    f"endorsement policy {self.endorsement_policy} outside "
                    f"[1, {n_peers}] for the configured topology"
                )
        if self.epsilon_schedule.kind not in ("equal", "weighted", "fixed", "uniform", "calibrated"):
            raise ConfigInvalid(f"unknown epsilon schedule {self.epsilon_schedule.kind!r}")
        bad_attacks = set(self.attacks) - {"linking", "composition", "averaging"}
        if bad_attacks:
            raise ConfigInvalid(f"unknown attack kinds: {sorted(bad_attacks)}")

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "n_writes": self.n_writes,
            "customers": list(self.customers),
            "products": list(self.products),
            "colors": list(self.colors),
            "quantity_range": list(self.quantity_range),
            "n_queries": self.n_queries,
            "repeat_ratio": self.repeat_ratio,
            "n_repeats": self.n_repeats,
            "sum_only": self.sum_only,
            "requesters": list(self.requesters),
            "epsilon_t": self.epsilon_t,
            "epsilon_schedule": self.epsilon_schedule.to_dict(),
            "write_rate": self.write_rate,
            "query_rate": self.query_rate,
            "rate_sweep": None if self.rate_sweep is None else list(self.rate_sweep),
            "attacks": list(self.attacks),
            "dp_enabled": self.dp_enabled,
            "orgs": None if self.orgs is None else [
                [org, list(peer_ids)] for org, peer_ids in self.orgs
            ],
            "batch_size": self.batch_size,
            "batch_timeout": self.batch_timeout,
            "endorsement_policy": self.endorsement_policy,
            "sensitivity_bound": self.sensitivity_bound,
            "seed": self.seed,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WorkloadConfig":
        kwargs = dict(d)
        if "scenario" in kwargs:
            base = scenario_config(kwargs.pop("scenario"))
            merged = base.to_dict()
            merged.update(kwargs)
            kwargs = merged
        for key in ("customers", "products", "colors", "requesters", "attacks"):
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = tuple(kwargs[key])
        if "quantity_range" in kwargs:
            kwargs["quantity_range"] = tuple(kwargs["quantity_range"])
        if kwargs.get("rate_sweep") is not None:
            kwargs["rate_sweep"] = tuple(kwargs["rate_sweep"])
        if kwargs.get("orgs") is not None:
            kwargs["orgs"] = tuple(
                (org, tuple(peer_ids)) for org, peer_ids in kwargs["orgs"]
            )
        if "epsilon_schedule" in kwargs and isinstance(kwargs["epsilon_schedule"], dict):
            kwargs["epsilon_schedule"] = EpsilonSchedule.from_dict(kwargs["epsilon_schedule"])
        unknown = set(kwargs) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigInvalid(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class QueryPlan:
    """One scheduled query with its budget allocation and repeat linkage."""

    tick: int
    tx: QueryTransaction
    eps_f: float
    key: CategoryKey
    repeat_of: Optional[int]


@dataclass
class WorkloadSchedule:
    writes: List[Tuple[int, WriteTransaction]]
    queries: List[QueryPlan]


def _workload_rng(cfg: WorkloadConfig) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))


def _fit_units(rng: np.random.Generator, count: int, lo_u: int, hi_u: int,
               target_u: int) -> List[int]:
    """Grid draws in [lo_u, hi_u] adjusted to hit target_u exactly."""
    if not count * lo_u <= target_u <= count * hi_u:
        raise ConfigInvalid(
            f"cannot fit a total of {target_u * EPS_UNIT:.6f} with {count} "
            f"values in [{lo_u * EPS_UNIT:.6f}, {hi_u * EPS_UNIT:.6f}]"
        )
    units = [int(u) for u in rng.integers(lo_u, hi_u + 1, size=count)]
    diff = target_u - sum(units)
    i = 0
    while diff != 0:
        u = units[i]
        step = min(diff, hi_u - u) if diff > 0 else max(diff, lo_u - u)
        units[i] = u + step
        diff -= step
        i = (i + 1) % count
    return units


def _epsilon_values(cfg: WorkloadConfig, rng: np.random.Generator,
                    repeat_slots: set) -> List[float]:
    sched = cfg.epsilon_schedule
    n = cfg.n_queries
    if sched.kind == "equal":
        share = allocate_equal(cfg.epsilon_t, n)
        return [share] * n
    if sched.kind == "weighted":
        requester_of = [cfg.requesters[i % len(cfg.requesters)] for i in range(n)]
        counts = {r: requester_of.count(r) for r in cfg.requesters}
        weights = sched.weights or {}
        profiles = [
            RequesterProfile(r, TrustClass.WEIGHTED, weights.get(r, 1.0))
            for r in cfg.requesters
        ]
        shares = allocate_weighted(profiles, counts, cfg.epsilon_t)
        return [shares[r] for r in requester_of]
    if sched.kind == "fixed":
        return [float(sched.value)] * n
    lo_u = round(sched.low / EPS_UNIT)
    hi_u = round(sched.high / EPS_UNIT)
    if sched.kind == "uniform":
        return [int(u) * EPS_UNIT for u in rng.integers(lo_u, hi_u + 1, size=n)]
    # calibrated: fresh and repeated queries hit separate exact totals
    fresh_idx = [i for i in range(n) if i not in repeat_slots]
    rep_idx = [i for i in range(n) if i in repeat_slots]
    fresh_units = _fit_units(rng, len(fresh_idx), lo_u, hi_u,
                             round(sched.fresh_total / EPS_UNIT))
    rep_units = _fit_units(rng, len(rep_idx), lo_u, hi_u,
                           round(sched.repeat_total / EPS_UNIT)) if rep_idx else []
    values = [0.0] * n
    for i, u in zip(fresh_idx, fresh_units):
        values[i] = u * EPS_UNIT
    for i, u in zip(rep_idx, rep_units):
        values[i] = u * EPS_UNIT
    return values


def _candidate_keys(cfg: WorkloadConfig,
                    writes: Sequence[WriteTransaction]) -> List[CategoryKey]:
    """Non-empty aggregate/attribute-cell combinations, largest answers first.

    Ordering by magnitude keeps the query stream on the aggregates a
    supply-chain requester actually asks for (totals and marginals
    before sparse three-attribute cells).
    """
    cells: Dict[tuple, List[int]] = {}
    for tx in writes:
        triple = (normalize(tx.customer_name), normalize(tx.product_name),
                  normalize(tx.color))
        for mask in ((a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)):
            cell = tuple(v if keep else None for v, keep in zip(triple, mask))
            slot = cells.setdefault(cell, [0, 0])
            slot[0] += 1
            slot[1] += tx.quantity
    aggregates = (Aggregate.SUM,) if cfg.sum_only else (Aggregate.SUM, Aggregate.COUNT)
    keys = [
        (CategoryKey(agg, cust, prod, col),
         cells[(cust, prod, col)][1 if agg is Aggregate.SUM else 0])
        for agg in aggregates
        for (cust, prod, col) in cells
    ]
    keys.sort(key=lambda item: (-item[1], item[0].label()))
    return [k for k, _ in keys]


def generate_workload(cfg: WorkloadConfig,
                      rng: Optional[np.random.Generator] = None) -> WorkloadSchedule:
    """Deterministic transaction schedule: write round, then query round.

    The query stream realizes the configured repeat count exactly, and
    every repeat lands after the first occurrence of its category.
    """
    cfg.validate()
    rng = rng if rng is not None else _workload_rng(cfg)

    lo, hi = cfg.quantity_range
    writes: List[Tuple[int, WriteTransaction]] = []
    for i in range(cfg.n_writes):
        tx = WriteTransaction(
            contract_id="supply-ledger",
            contract_version="1.0",
            contract_function="record_purchase",
            timeout_ms=3000,
            product_name=cfg.products[int(rng.integers(len(cfg.products)))],
            color=cfg.colors[int(rng.integers(len(cfg.colors)))],
            quantity=int(rng.integers(lo, hi + 1)),
            customer_name=cfg.customers[int(rng.integers(len(cfg.customers)))],
        )
        writes.append((i // cfg.write_rate, tx))

    if cfg.n_queries == 0:
        return WorkloadSchedule(writes=writes, queries=[])

    candidates = _candidate_keys(cfg, [tx for _, tx in writes])
    n_repeats = cfg.resolved_repeats()
    n_fresh = cfg.n_queries - n_repeats
    if n_fresh > len(candidates):
        raise ConfigInvalid(
            f"need {n_fresh} distinct query categories but the workload "
            f"only produced {len(candidates)}"
        )
    selected = candidates[:n_fresh]
    rng.shuffle(selected)

    repeat_slots: set = set()
    if n_repeats > 0:
        repeat_slots = set(
            int(i) for i in rng.choice(np.arange(1, cfg.n_queries),
                                       size=n_repeats, replace=False)
        )
    eps_values = _epsilon_values(cfg, rng, repeat_slots)

    queries: List[QueryPlan] = []
    fresh_iter = iter(selected)
    emitted: List[Tuple[int, CategoryKey]] = []
    for i in range(cfg.n_queries):
        if i in repeat_slots:
            src_pos = int(rng.integers(len(emitted)))
            src_index, key = emitted[src_pos]
            repeat_of = src_index
        else:
            key = next(fresh_iter)
            repeat_of = None
            emitted.append((i, key))
        tx = QueryTransaction(
            contract_id="supply-ledger",
            contract_version="1.0",
            contract_function="stat_query",
            timeout_ms=3000,
            read_only=True,
            predicate=QueryPredicate(key.customer_name, key.product_name, key.color),
            aggregate=key.aggregate,
            requester_id=cfg.requesters[i % len(cfg.requesters)],
        )
        queries.append(QueryPlan(
            tick=i // cfg.query_rate, tx=tx, eps_f=eps_values[i],
            key=key, repeat_of=repeat_of,
        ))
    return WorkloadSchedule(writes=writes, queries=queries)


def relative_error(a: float, a_prime: float) -> float:
    """Accuracy cost of a perturbed answer, in percent: |a - a'| / a * 100."""
    if a == 0:
        raise ZeroActual("relative error is undefined for an actual value of 0")
    return abs(a - a_prime) / a * 100.0


# ---------------------------------------------------------------------------
# scenario execution

@dataclass
class ExecResult:
    net: Network
    query_receipts: list
    channel_id: str

    @property
    def channel(self):
        return self.net.channels[self.channel_id]


def _build_network(cfg: WorkloadConfig, reuse_enabled: bool) -> Network:
    kwargs = {}
    if cfg.orgs is not None:
        kwargs["orgs"] = cfg.orgs
    net = Network(
        endorsement_policy=cfg.endorsement_policy,
        batch_size=cfg.batch_size,
        batch_timeout=cfg.batch_timeout,
        epsilon_t=cfg.epsilon_t,
        sensitivity_bound=cfg.sensitivity_bound,
        dp_enabled=cfg.dp_enabled,
        reuse_enabled=reuse_enabled,
        seed=cfg.seed,
        **kwargs,
    )
    net.register_client(LOADER_CLIENT)
    for requester in cfg.requesters:
        net.register_client(requester)
    return net


def _execute(cfg: WorkloadConfig, schedule: WorkloadSchedule,
             reuse_enabled: bool) -> ExecResult:
    """Drive one full pipeline pass: write round, drain, query round, drain."""
    net = _build_network(cfg, reuse_enabled)
    for tick, tx in schedule.writes:
        while net.clock < tick:
            net.tick()
        net.submit(LOADER_CLIENT, tx)
    net.run_until_idle()

    base = net.clock
    query_receipts = []
    for plan in schedule.queries:
        while net.clock < base + plan.tick:
            net.tick()
        receipt = net.submit(plan.tx.requester_id, plan.tx, eps_f=plan.eps_f)
        query_receipts.append(receipt)
    net.run_until_idle()
    return ExecResult(net=net, query_receipts=query_receipts, channel_id="mychannel")


def _mode_metrics(res: ExecResult, rows: List[dict], err_field: str) -> dict:
    receipts = res.net.receipts
    committed = [r for r in receipts if r.status is ReceiptStatus.COMMITTED]
    cached = [r for r in receipts if r.status is ReceiptStatus.CACHED]
    rejected = [r for r in receipts if r.status is ReceiptStatus.REJECTED]
    latencies = [r.latency for r in committed]
    elapsed = max(res.net.clock, 1)
    errors = [row[err_field] for row in rows if row[err_field] is not None]
    mean_err = float(np.mean(errors)) if errors else 0.0
    return {
        "committed": len(committed),
        "cached": len(cached),
        "rejected": len(rejected),
        "elapsed_ticks": res.net.clock,
        "throughput": len(committed) / elapsed,
        "mean_latency": float(np.mean(latencies)) if latencies else 0.0,
        "max_latency": int(max(latencies)) if latencies else 0,
        "eps_sum": res.channel.accountant.accumulated(),
        "mean_relative_error": mean_err,
        "accuracy": 100.0 - mean_err,
    }


def run_scenario(cfg: WorkloadConfig) -> dict:
    """Run naive and reuse passes on one schedule and assemble the report."""
    cfg.validate()
    schedule = generate_workload(cfg)
    res_naive = _execute(cfg, schedule, reuse_enabled=False)
    res_reuse = _execute(cfg, schedule, reuse_enabled=True)

    state = res_reuse.channel.state
    naive_events = {e.query_id: e for e in res_naive.channel.accountant.events}
    reuse_events = {e.query_id: e for e in res_reuse.channel.accountant.events}

    rows: List[dict] = []
    cum_naive = 0.0
    cum_reuse = 0.0
    for i, plan in enumerate(schedule.queries):
        rec_n = res_naive.query_receipts[i]
        rec_r = res_reuse.query_receipts[i]
        exact = state.aggregate_cell(plan.key.customer_name, plan.key.product_name,
                                     plan.key.color)
        exact_value = float(exact[0] if plan.key.aggregate is Aggregate.COUNT else exact[1])
        ev_n = naive_events.get(rec_n.tx_id)
        ev_r = reuse_events.get(rec_r.tx_id)
        if ev_n is not None and not ev_n.reused:
            cum_naive += ev_n.epsilon_f
        if ev_r is not None and not ev_r.reused:
            cum_reuse += ev_r.epsilon_f
        value_n = rec_n.response.value if rec_n.response is not None else None
        value_r = rec_r.response.value if rec_r.response is not None else None
        err_n = relative_error(exact_value, value_n) if (
            value_n is not None and cfg.dp_enabled and exact_value != 0) else (
            0.0 if value_n is not None and not cfg.dp_enabled else None)
        err_r = relative_error(exact_value, value_r) if (
            value_r is not None and cfg.dp_enabled and exact_value != 0) else (
            0.0 if value_r is not None and not cfg.dp_enabled else None)
        rows.append({
            "index": i,
            "tx_id": rec_r.tx_id,
            "category": plan.key.label(),
            "requester": plan.tx.requester_id,
            "eps_f": plan.eps_f,
            "repeat_of": plan.repeat_of,
            "exact": exact_value,
            "value_naive": value_n,
            "value_reuse": value_r,
            "reused": rec_r.status is ReceiptStatus.CACHED,
            "rel_err_naive": err_n,
            "rel_err_reuse": err_r,
            "cum_eps_naive": cum_naive,
            "cum_eps_reuse": cum_reuse,
        })

    naive_metrics = _mode_metrics(res_naive, rows, "rel_err_naive")
    reuse_metrics = _mode_metrics(res_reuse, rows, "rel_err_reuse")
    naive_sum = naive_metrics["eps_sum"]
    reuse_sum = reuse_metrics["eps_sum"]
    savings = 0.0 if naive_sum == 0 else (naive_sum - reuse_sum) / naive_sum * 100.0

    performance: List[dict] = []
    if cfg.rate_sweep:
        performance = performance_scan(cfg, cfg.rate_sweep)

    report = {
        "config": cfg.to_dict(),
        "rows": rows,
        "naive": naive_metrics,
        "reuse": reuse_metrics,
        "naive_eps_sum": naive_sum,
        "reuse_eps_sum": reuse_sum,
        "savings_pct": savings,
        "performance": performance,
        "attacks": [run_attack(kind, seed=cfg.seed) for kind in cfg.attacks],
        "artifacts": {
            "budget_events_naive.csv": res_naive.channel.accountant.to_csv(),
            "budget_events_reuse.csv": res_reuse.channel.accountant.to_csv(),
            "receipts_naive.csv": res_naive.net.receipts_csv(),
            "receipts_reuse.csv": res_reuse.net.receipts_csv(),
        },
    }
    return report


def performance_scan(cfg: WorkloadConfig, rates: Sequence[int]) -> List[dict]:
    """Throughput/latency per submission rate, split by transaction kind."""
    out = []
    for rate in rates:
        sub = replace(cfg, write_rate=rate, query_rate=rate, rate_sweep=None)
        schedule = generate_workload(sub)
        res = _execute(sub, schedule, reuse_enabled=True)
        elapsed = max(res.net.clock, 1)
        row: dict = {"rate": rate, "elapsed_ticks": res.net.clock}
        for kind in ("write", "query"):
            committed = [r for r in res.net.receipts
                         if r.kind == kind and r.status is ReceiptStatus.COMMITTED]
            lat = [r.latency for r in committed]
            row[f"{kind}_committed"] = len(committed)
            row[f"{kind}_throughput"] = len(committed) / elapsed
            row[f"{kind}_mean_latency"] = float(np.mean(lat)) if lat else 0.0
        out.append(row)
    return out


def sweep(cfg: WorkloadConfig, epsilon_list: Sequence[float]) -> dict:
    """Accuracy versus budget: rerun the scenario for each swept value.

    With a fixed per-query schedule the swept value is the budget each
    query is answered at and the threshold is auto-sized to fit the
    stream; with an equal split the swept value is the threshold itself.
    Every run reuses the same seed, so the mean relative error scales
    exactly with the noise magnitude. Rows carry the analytic
    expectation mean(100 * scale / a) for cross-checking.
    """
    rows = []
    for eps_t in epsilon_list:
        if cfg.epsilon_schedule.kind == "fixed":
            per_query = float(eps_t)
            sub = replace(
                cfg,
                epsilon_schedule=replace(cfg.epsilon_schedule, value=per_query),
                epsilon_t=per_query * (cfg.n_queries + 1),
                rate_sweep=None,
            )
        elif cfg.epsilon_schedule.kind == "equal":
            per_query = allocate_equal(float(eps_t), cfg.n_queries)
            sub = replace(cfg, epsilon_t=float(eps_t), rate_sweep=None)
        else:
            raise ConfigInvalid(
                "sweeps need an 'equal' or 'fixed' epsilon schedule, "
                f"got {cfg.epsilon_schedule.kind!r}"
            )
        report = run_scenario(sub)
        lam = laplace_scale(per_query, sub.sensitivity_bound)
        actuals = [row["exact"] for row in report["rows"] if row["exact"] != 0]
        expected = float(np.mean([100.0 * lam / a for a in actuals])) if actuals else 0.0
        se = (100.0 * lam / len(actuals)) * math.sqrt(
            sum(1.0 / (a * a) for a in actuals)) if actuals else 0.0
        rows.append({
            "epsilon_t": float(eps_t),
            "per_query_epsilon": per_query,
            "noise_scale": lam,
            "mean_relative_error": report["reuse"]["mean_relative_error"],
            "accuracy": report["reuse"]["accuracy"],
            "expected_error": expected,
            "expected_error_se": se,
        })
    return {"config": cfg.to_dict(), "epsilon_list": [float(e) for e in epsilon_list],
            "rows": rows}


# ---------------------------------------------------------------------------
# named scenarios

def scenario_config(name: str, seed: Optional[int] = None) -> WorkloadConfig:
    """Shipped scenario presets; the workload counts are kept distinct."""
    if name == "error-150":
        # Each query is answered at the swept budget; the threshold leaves
        # headroom for exactly the 150-query stream.
        cfg = WorkloadConfig(
            name=name, n_writes=500, n_queries=150, repeat_ratio=0.0,
            epsilon_t=151.0,
            epsilon_schedule=EpsilonSchedule(kind="fixed", value=1.0),
            sum_only=True, seed=7,
        )
    elif name == "budget-155":
        cfg = WorkloadConfig(
            name=name, n_writes=500, n_queries=155, n_repeats=55,
            epsilon_t=10.0,
            epsilon_schedule=EpsilonSchedule(
                kind="calibrated", low=0.01, high=0.12,
                fresh_total=5.7, repeat_total=3.2,
            ),
            sum_only=True, seed=7,
        )
    elif name == "throughput-755":
        # Mixed COUNT/SUM stream so 755 distinct categories exist; every
        # query is fresh and therefore flows through ordering and commit.
        cfg = WorkloadConfig(
            name=name, n_writes=500, n_queries=755, repeat_ratio=0.0,
            epsilon_t=8.0, epsilon_schedule=EpsilonSchedule(kind="equal"),
            sum_only=False, rate_sweep=(10, 20, 30, 40, 50), seed=7,
        )
    else:
        raise ConfigInvalid(f"unknown scenario {name!r}; "
                            "expected error-150, budget-155, or throughput-755")
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    cfg.validate()
    return cfg


SCENARIO_NAMES = ("error-150", "budget-155", "throughput-755")


# ---------------------------------------------------------------------------
# attack drivers

def run_attack(kind: str, *, seed: int = 7) -> dict:
    """One configured attack, run against both provider behaviors.

    Pairs the vulnerable and defended runs so a scenario report shows
    what the adversary gains with and without the countermeasure.
    Sizes are kept small; the dedicated drivers expose the full knobs.
    """
    if kind == "linking":
        off = run_linking_attack(dp_enabled=False, seed=seed)
        on = run_linking_attack(dp_enabled=True, n_trials=2000, seed=seed)
        return {
            "kind": kind,
            "noise_off": json.loads(off["report"].to_json()),
            "noise_on": {
                "success_rate": on["success_rate"],
                "expected_rate": on["expected_rate"],
                "n_trials": on["n_trials"],
            },
        }
    if kind == "composition":
        defended = run_composition_attack(reuse_enabled=True, categories=100,
                                          repeats=25, n_writes=200, seed=seed)
        vulnerable = run_composition_attack(reuse_enabled=False, categories=100,
                                            repeats=25, n_writes=200, seed=seed)
        return {
            "kind": kind,
            "reuse": json.loads(defended.to_json()),
            "naive": json.loads(vulnerable.to_json()),
        }
    if kind == "averaging":
        defended = run_averaging_attack(reuse_enabled=True, n=50, seed=seed)
        vulnerable = run_averaging_attack(reuse_enabled=False, n=50, seed=seed)
        return {
            "kind": kind,
            "reuse": json.loads(defended.to_json()),
            "naive": json.loads(vulnerable.to_json()),
        }
    raise ConfigInvalid(f"unknown attack kind {kind!r}")


def run_linking_attack(*, dp_enabled: bool = True, epsilon: float = 1.0,
                       n_trials: int = 10_000, tolerance: float = 5.0,
                       n_writes: int = 200, seed: int = 7) -> dict:
    """Difference attack against a small populated ledger.

    With noise disabled one response recovers the target exactly; with
    noise on, the Monte-Carlo success rate is compared with the noise
    CDF at the tolerance.
    """
    cfg = WorkloadConfig(name="attack-linking", n_writes=n_writes, n_queries=0,
                         dp_enabled=dp_enabled, epsilon_t=max(1.0, epsilon * (n_trials + 1)),
                         seed=seed)
    schedule = generate_workload(cfg)
    res = _execute(cfg, schedule, reuse_enabled=False)
    state = res.channel.state
    records = [r.tx for r in state.records]

    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    target_index = int(rng.integers(len(records)))
    bk = BackgroundKnowledge.from_ledger(records, target_index)
    true_qty = float(records[target_index].quantity)
    query = QueryTransaction(
        contract_id="supply-ledger", contract_version="1.0",
        contract_function="stat_query", timeout_ms=3000, read_only=True,
        predicate=QueryPredicate(), aggregate=Aggregate.SUM,
        requester_id="distributor-a",
    )
    spec = SensitivitySpec(Aggregate.SUM, cfg.sensitivity_bound)

    if not dp_enabled:
        exact_total = bk.matching_sum(query.predicate) + true_qty
        report = linking_attack(query, [exact_total], bk, true_qty, tolerance)
        return {"report": report, "success_rate": 1.0 if report.success else 0.0,
                "expected_rate": 1.0, "n_trials": 1}

    lam = laplace_scale(epsilon, cfg.sensitivity_bound)
    rate, sample = linking_trials(query, bk, true_qty, epsilon, spec, rng,
                                  n_trials, tolerance)
    return {
        "report": sample[0],
        "success_rate": rate,
        "expected_rate": 1.0 - math.exp(-tolerance / lam),
        "n_trials": n_trials,
    }


def run_composition_attack(*, reuse_enabled: bool = True, categories: int = 200,
                           repeats: int = 50, epsilon: float = 1.0,
                           n_writes: int = 300, seed: int = 7) -> AttackReport:
    """Send one query set to both channel peers, repeatedly, and average."""
    needed = 2 * repeats * categories * epsilon + 1
    cfg = WorkloadConfig(name="attack-composition", n_writes=n_writes, n_queries=0,
                         epsilon_t=needed, seed=seed)
    schedule = generate_workload(cfg)
    net = _build_network(cfg, reuse_enabled)
    for _, tx in schedule.writes:
        net.submit(LOADER_CLIENT, tx)
    net.run_until_idle()
    channel = net.channels["mychannel"]
    peers = channel.members[:2]

    keys = [k for k in _candidate_keys(cfg, [r.tx for r in channel.state.records])
            if k.aggregate is Aggregate.SUM][:categories]
    if len(keys) < categories:
        raise ConfigInvalid(f"workload produced only {len(keys)} query categories")

    answers: Dict[str, Dict[CategoryKey, List[float]]] = {p: {} for p in peers}
    observed = 0.0
    for _ in range(repeats):
        for key in keys:
            for peer_id in peers:
                tx = QueryTransaction(
                    contract_id="supply-ledger", contract_version="1.0",
                    contract_function="stat_query", timeout_ms=3000, read_only=True,
                    predicate=QueryPredicate(key.customer_name, key.product_name, key.color),
                    aggregate=key.aggregate, requester_id="distributor-a",
                )
                receipt = net.submit("distributor-a", tx, eps_f=epsilon,
                                     target_peer=peer_id)
                answers[peer_id].setdefault(key, []).append(receipt.response.value)
                if not receipt.response.reused:
                    observed += receipt.response.epsilon_used
    net.run_until_idle()

    true_values = {
        k: float(channel.state.aggregate_cell(k.customer_name, k.product_name,
                                              k.color)[1])
        for k in keys
    }
    return composition_attack(answers[peers[0]], answers[peers[1]], repeats,
                              true_values, epsilon_observed=observed)


def run_averaging_attack(*, reuse_enabled: bool = True, n: int = 100,
                         epsilon: float = 1.0, epsilon_t: Optional[float] = None,
                         n_writes: int = 200, seed: int = 7) -> AttackReport:
    """Repeat one query n times and average the answers."""
    eps_t = epsilon_t if epsilon_t is not None else n * epsilon + 1
    cfg = WorkloadConfig(name="attack-averaging", n_writes=n_writes, n_queries=0,
                         epsilon_t=eps_t, seed=seed)
    schedule = generate_workload(cfg)
    net = _build_network(cfg, reuse_enabled)
    for _, tx in schedule.writes:
        net.submit(LOADER_CLIENT, tx)
    net.run_until_idle()
    channel = net.channels["mychannel"]

    query = QueryTransaction(
        contract_id="supply-ledger", contract_version="1.0",
        contract_function="stat_query", timeout_ms=3000, read_only=True,
        predicate=QueryPredicate(customer_name=cfg.customers[0]),
        aggregate=Aggregate.SUM, requester_id="distributor-a",
    )
    key = categorize(query)
    true_value = float(channel.state.aggregate_cell(
        key.customer_name, key.product_name, key.color)[1])

    def ask():
        receipt = net.submit("distributor-a", query, eps_f=epsilon)
        if receipt.status is ReceiptStatus.REJECTED:
            raise BudgetExhausted(receipt.reject_reason)
        return receipt.response

    report = repeated_query_averaging(ask, query, n, true_value)
    net.run_until_idle()
    return report


# ---------------------------------------------------------------------------
# report export

def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v)
                         for v in row])
    return buf.getvalue()


def export_report(report: dict, out_dir) -> List[Path]:
    """Write the report as one JSON summary plus one CSV per metric series.

    Output is deterministic: re-exporting the same report produces
    byte-identical files.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise IoFailure(str(err)) from err

    written: List[Path] = []

    def emit(name: str, text: str) -> None:
        path = out / name
        write_text(path, text)
        written.append(path)

    emit("report.json", json.dumps(report, sort_keys=True, indent=2) + "\n")

    summary = {
        "scenario": report["config"]["name"],
        "seed": report["config"]["seed"],
        "n_writes": report["config"]["n_writes"],
        "n_queries": report["config"]["n_queries"],
        "naive_eps_sum": report["naive_eps_sum"],
        "reuse_eps_sum": report["reuse_eps_sum"],
        "savings_pct": report["savings_pct"],
        "mean_relative_error": report["reuse"]["mean_relative_error"],
        "accuracy": report["reuse"]["accuracy"],
        "naive": report["naive"],
        "reuse": report["reuse"],
    }
    emit("summary.json", json.dumps(summary, sort_keys=True, indent=2) + "\n")

    emit("budget_curve.csv", _csv_text(
        ["query_index", "naive_eps_sum", "reuse_eps_sum"],
        [(r["index"], r["cum_eps_naive"], r["cum_eps_reuse"]) for r in report["rows"]],
    ))
    emit("relative_errors.csv", _csv_text(
        ["query_index", "category", "exact", "value_naive", "value_reuse",
         "rel_err_naive", "rel_err_reuse", "reused"],
        [(r["index"], r["category"], r["exact"], r["value_naive"], r["value_reuse"],
          r["rel_err_naive"], r["rel_err_reuse"], int(r["reused"])) for r in report["rows"]],
    ))
    if report.get("performance"):
        keys = list(report["performance"][0])
        emit("performance.csv", _csv_text(
            keys, [[row[k] for k in keys] for row in report["performance"]],
        ))
    for name, text in report.get("artifacts", {}).items():
        emit(name, text)
    return written


def export_sweep(sweep_result: dict, out_dir) -> List[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise IoFailure(str(err)) from err
    written = []
    path = out / "sweep.json"
    write_text(path, json.dumps(sweep_result, sort_keys=True, indent=2) + "\n")
    written.append(path)
    rows = sweep_result["rows"]
    path = out / "error_vs_epsilon.csv"
    write_text(path, _csv_text(
        ["epsilon_t", "per_query_epsilon", "noise_scale", "mean_relative_error",
         "accuracy", "expected_error", "expected_error_se"],
        [(r["epsilon_t"], r["per_query_epsilon"], r["noise_scale"],
          r["mean_relative_error"], r["accuracy"], r["expected_error"],
          r["expected_error_se"]) for r in rows],
    ))
    written.append(path)
    return written


def export_ledger(cfg: WorkloadConfig, out_dir) -> List[Path]:
    """Populate a ledger with the write round only and dump it to files."""
    sub = replace(cfg, n_queries=0, rate_sweep=None)
    schedule = generate_workload(sub)
    res = _execute(sub, schedule, reuse_enabled=True)
    peer = next(iter(res.net.peers.values()))
    chain = peer.chains["mychannel"]
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise IoFailure(str(err)) from err
    tx_path = out / "ledger.jsonl"
    write_text(tx_path, export_transactions(chain, "mychannel"))
    block_path = out / "blocks.jsonl"
    write_text(block_path, export_blocks(chain))
    return [tx_path, block_path]
