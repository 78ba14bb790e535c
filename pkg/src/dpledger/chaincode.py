"""The privacy-preserving query module executed by peers.

A query is categorized by its aggregate and normalized attributes. On a
100% category match the previously recorded answer is returned and no
new budget is spent; otherwise the budget is charged, the query is
evaluated on the original ledger data, and a freshly perturbed response
is recorded back to the ledger together with the remaining budget.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .budget import BudgetAccountant
from .errors import UnsupportedAggregate
from .laplace import SensitivitySpec, perturb
from .ledger import WorldState
from .transactions import (
    Aggregate,
    CategoryKey,
    PerturbedResponse,
    QueryRecord,
    QueryTransaction,
    validate_query,
)


def categorize(q: QueryTransaction) -> CategoryKey:
    """Deterministic cache key: aggregate plus trimmed, case-folded attributes."""
    if not isinstance(q.aggregate, Aggregate):
        raise UnsupportedAggregate(f"unsupported aggregate {q.aggregate!r}")
    pred = q.predicate.normalized()
    return CategoryKey(
        aggregate=q.aggregate,
        customer_name=pred.customer_name,
        product_name=pred.product_name,
        color=pred.color,
    )


def lookup_cached(state: WorldState, key: CategoryKey) -> Optional[QueryRecord]:
    """Most recent recorded answer for exactly this category, if any."""
    return state.lookup(key)


def evaluate_exact(q: QueryTransaction, state: WorldState) -> float:
    """Evaluate the query on the original ledger data, without noise."""
    key = categorize(q)
    count, qty_sum = state.aggregate_cell(key.customer_name, key.product_name, key.color)
    return float(count) if q.aggregate is Aggregate.COUNT else float(qty_sum)


class ChaincodeEngine:
    """One installed chaincode instance: answers queries for its peer.

    Instrumented with probe/evaluation/noise counters so the linear-cost
    claim can be asserted, not assumed. reuse_enabled=False disables the
    cached-answer path (fresh noise for every query); dp_enabled=False
    reproduces the bare evaluation behavior of a default chaincode.
    """

    def __init__(self, *, dp_enabled: bool = True, reuse_enabled: bool = True,
                 sensitivity_bound: float = 100.0):
        self.dp_enabled = dp_enabled
        self.reuse_enabled = reuse_enabled
        self.sensitivity_bound = float(sensitivity_bound)
        self.probe_count = 0
        self.evaluation_count = 0
        self.noise_draws = 0

    def answer_query(self, q: QueryTransaction, state: WorldState,
                     acct: BudgetAccountant, eps_f: float,
                     rng: np.random.Generator, *,
                     query_id: Optional[str] = None) -> PerturbedResponse:
        """Serve one query: reuse the recorded answer or perturb a fresh one.

        On the fresh path the budget is charged first; a BudgetExhausted
        from the accountant propagates with ledger state untouched.
        """
        validate_query(q)
        key = categorize(q)
        qid = query_id if query_id is not None else f"q{state.height}-{len(state.query_log)}"

        if self.dp_enabled and self.reuse_enabled:
            self.probe_count += 1
            cached = lookup_cached(state, key)
            if cached is not None:
                resp = PerturbedResponse(
                    value=cached.response.value,
                    epsilon_used=cached.epsilon_spent,
                    reused=True,
                    query_id=qid,
                )
                rec = QueryRecord(key, cached.epsilon_spent, resp, state.height + 1)
                state.record_query(rec, acct.epsilon_rem)
                acct.record_reuse(qid, q.requester_id, eps_f)
                return resp

        if not self.dp_enabled:
            self.evaluation_count += 1
            exact_value = evaluate_exact(q, state)
            return PerturbedResponse(exact_value, 0.0, False, qid)

        acct.try_spend(eps_f, qid, q.requester_id)
        self.evaluation_count += 1
        exact_value = evaluate_exact(q, state)
        spec = SensitivitySpec(q.aggregate, self.sensitivity_bound)
        noisy = perturb(exact_value, eps_f, spec, rng)
        self.noise_draws += 1
        resp = PerturbedResponse(noisy, eps_f, False, qid)
        rec = QueryRecord(key, eps_f, resp, state.height + 1)
        state.record_query(rec, acct.epsilon_rem)
        return resp
