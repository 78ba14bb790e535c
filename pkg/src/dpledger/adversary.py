"""Honest-but-curious attacks against the query interface.

Two threats are modeled. A linking attack subtracts full background
knowledge (every record except the target) from an observed SUM answer
to recover the target quantity. A composition attack collects responses
for the same queries from multiple channel members and averages them to
shrink the noise. Both are driver-side batch procedures used to measure
what an insider competitor can actually recover.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import BudgetExhausted, NoCommonQueries, PredicateMismatch
from .laplace import SensitivitySpec, perturb
from .transactions import (
    CategoryKey,
    PerturbedResponse,
    QueryTransaction,
    WriteTransaction,
    normalize,
)

DEFAULT_TOLERANCE = 5.0  # quantity units; 5% of the default sensitivity bound


@dataclass
class BackgroundKnowledge:
    """Everything the adversary knows: the full ledger minus its target."""

    known_records: List[WriteTransaction]
    target: Tuple[str, str, str]  # (customer_name, product_name, color)
    _sums: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_ledger(cls, records: Sequence[WriteTransaction],
                    target_index: int) -> "BackgroundKnowledge":
        target_tx = records[target_index]
        known = [tx for i, tx in enumerate(records) if i != target_index]
        return cls(
            known_records=known,
            target=(target_tx.customer_name, target_tx.product_name, target_tx.color),
        )

    def matching_sum(self, predicate) -> float:
        """Quantity total of known records matching the predicate (cached)."""
        pred = predicate.normalized()
        cache_key = (pred.customer_name, pred.product_name, pred.color)
        if cache_key not in self._sums:
            total = 0
            for tx in self.known_records:
                if pred.customer_name is not None and normalize(tx.customer_name) != pred.customer_name:
                    continue
                if pred.product_name is not None and normalize(tx.product_name) != pred.product_name:
                    continue
                if pred.color is not None and normalize(tx.color) != pred.color:
                    continue
                total += tx.quantity
            self._sums[cache_key] = float(total)
        return self._sums[cache_key]


@dataclass(frozen=True)
class AttackReport:
    """What one attack run recovered, scored against the ground truth."""

    kind: str
    estimate: float
    true_value: float
    abs_error: float
    tolerance: float
    success: bool
    queries_consumed: int
    epsilon_observed: float
    details: dict = field(default_factory=dict)

    @classmethod
    def build(cls, kind: str, estimate: float, true_value: float, tolerance: float,
              queries_consumed: int, epsilon_observed: float,
              details: Optional[dict] = None) -> "AttackReport":
        err = abs(estimate - true_value)
        return cls(kind=kind, estimate=estimate, true_value=true_value,
                   abs_error=err, tolerance=tolerance, success=err <= tolerance,
                   queries_consumed=queries_consumed,
                   epsilon_observed=epsilon_observed, details=details or {})

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "estimate": self.estimate,
            "true_value": self.true_value,
            "abs_error": self.abs_error,
            "tolerance": self.tolerance,
            "success": self.success,
            "queries_consumed": self.queries_consumed,
            "epsilon_observed": self.epsilon_observed,
            "details": self.details,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _response_values(responses: Sequence) -> List[float]:
    return [r.value if isinstance(r, PerturbedResponse) else float(r) for r in responses]


def _epsilon_observed(responses: Sequence) -> float:
    total = 0.0
    for r in responses:
        if isinstance(r, PerturbedResponse) and not r.reused:
            total += r.epsilon_used
    return total


def _covers_target(query: QueryTransaction, target: Tuple[str, str, str]) -> bool:
    pred = query.predicate.normalized()
    tgt = tuple(normalize(v) for v in target)
    for want, have in zip((pred.customer_name, pred.product_name, pred.color), tgt):
        if want is not None and want != have:
            return False
    return True


def linking_attack(query: QueryTransaction, responses: Sequence,
                   bk: BackgroundKnowledge, true_quantity: float,
                   tolerance: float = DEFAULT_TOLERANCE) -> AttackReport:
    """Difference attack: observed SUM minus the known matching total.

    The estimate error is exactly the mechanism noise, so with noise
    disabled the target quantity is recovered exactly.
    """
    if not responses:
        raise PredicateMismatch("no responses to attack")
    if not _covers_target(query, bk.target):
        raise PredicateMismatch(
            f"query predicate does not cover the target {bk.target!r}"
        )
    values = _response_values(responses)
    estimate = statistics.fmean(values) - bk.matching_sum(query.predicate)
    return AttackReport.build(
        kind="linking",
        estimate=estimate,
        true_value=float(true_quantity),
        tolerance=tolerance,
        queries_consumed=len(values),
        epsilon_observed=_epsilon_observed(responses),
    )


def linking_trials(query: QueryTransaction, bk: BackgroundKnowledge,
                   true_quantity: float, epsilon: float, spec: SensitivitySpec,
                   rng: np.random.Generator, n_trials: int,
                   tolerance: float = DEFAULT_TOLERANCE) -> Tuple[float, List[AttackReport]]:
    """Monte-Carlo calibration: success rate of single-response linking.

    Each trial perturbs the exact SUM afresh and runs the attack on that
    one answer; the returned rate should match the noise CDF at the
    tolerance, 1 - exp(-tolerance / scale).
    """
    exact_total = bk.matching_sum(query.predicate) + float(true_quantity)
    successes = 0
    sample: List[AttackReport] = []
    for i in range(n_trials):
        observed = perturb(exact_total, epsilon, spec, rng)
        report = linking_attack(query, [observed], bk, true_quantity, tolerance)
        successes += report.success
        if i < 10:
            sample.append(report)
    return successes / n_trials, sample


def composition_attack(answers_a: Mapping[CategoryKey, Sequence[float]],
                       answers_b: Mapping[CategoryKey, Sequence[float]],
                       repeats: int,
                       true_values: Mapping[CategoryKey, float],
                       target_key: Optional[CategoryKey] = None,
                       tolerance: float = DEFAULT_TOLERANCE,
                       combine: str = "mean",
                       epsilon_observed: float = 0.0) -> AttackReport:
    """Cross-member combination over the intersection of answered categories.

    Reports the variance shrink the combination achieved versus a single
    response. Against deterministic reuse every collected value per
    category is identical, so the sample variance is zero and combining
    refines nothing. combine="median" is a variant of the default
    mean-combination.
    """
    if combine not in ("mean", "median"):
        raise ValueError(f"combine must be 'mean' or 'median', got {combine!r}")
    common = sorted(set(answers_a) & set(answers_b), key=lambda k: k.label())
    if not common:
        raise NoCommonQueries("no overlapping query categories between the members")

    per_key_values: Dict[CategoryKey, List[float]] = {
        k: list(answers_a[k]) + list(answers_b[k]) for k in common
    }
    combiner = statistics.fmean if combine == "mean" else statistics.median
    estimates = {k: combiner(v) for k, v in per_key_values.items()}
    distinct_counts = {k: len(set(v)) for k, v in per_key_values.items()}

    mean_errors = [estimates[k] - true_values[k] for k in common]
    single_errors = [v - true_values[k] for k in common for v in per_key_values[k]]
    var_mean = statistics.fmean(e * e for e in mean_errors)
    var_single = statistics.fmean(e * e for e in single_errors)
    n_collected = sum(len(v) for v in per_key_values.values())

    key = target_key if target_key is not None else common[0]
    if key not in per_key_values:
        raise NoCommonQueries(f"target category {key.label()} was not answered by both")

    within = statistics.fmean(
        statistics.pvariance(v) if len(v) > 1 else 0.0
        for v in per_key_values.values()
    )
    details = {
        "combine": combine,
        "categories": len(common),
        "responses_per_category": len(per_key_values[key]),
        "max_distinct_values_per_category": max(distinct_counts.values()),
        "variance_single": var_single,
        "variance_mean": var_mean,
        "variance_ratio": var_mean / var_single if var_single > 0 else 0.0,
        "expected_ratio_independent_noise": 1.0 / (2 * repeats),
        "mean_within_category_variance": within,
        "mean_abs_error": statistics.fmean(abs(e) for e in mean_errors),
    }
    return AttackReport.build(
        kind="composition",
        estimate=estimates[key],
        true_value=float(true_values[key]),
        tolerance=tolerance,
        queries_consumed=n_collected,
        epsilon_observed=epsilon_observed,
        details=details,
    )


def repeated_query_averaging(ask: Callable[[], PerturbedResponse],
                             query: QueryTransaction, n: int, true_value: float,
                             tolerance: float = DEFAULT_TOLERANCE) -> AttackReport:
    """Issue the same query n times and average whatever comes back.

    Against fresh noise the mean-estimate error shrinks like
    sqrt(2 * scale**2 / n); against budget reuse every answer is the
    first one, so repeating buys nothing. Stops early if the provider's
    budget runs out.
    """
    responses: List[PerturbedResponse] = []
    truncated = False
    for _ in range(n):
        try:
            responses.append(ask())
        except BudgetExhausted:
            truncated = True
            break
    if not responses:
        raise BudgetExhausted("provider budget was exhausted before any answer")

    values = [r.value for r in responses]
    details = {
        "requested": n,
        "answered": len(values),
        "truncated_by_budget": truncated,
        "distinct_values": len(set(values)),
        "sample_std": statistics.pstdev(values) if len(values) > 1 else 0.0,
        "fresh_responses": sum(1 for r in responses if not r.reused),
    }
    return AttackReport.build(
        kind="averaging",
        estimate=statistics.fmean(values),
        true_value=float(true_value),
        tolerance=tolerance,
        queries_consumed=len(values),
        epsilon_observed=_epsilon_observed(responses),
        details=details,
    )
