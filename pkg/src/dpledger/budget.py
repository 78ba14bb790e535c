"""Privacy budget accounting for one data provider on one channel ledger.

Balances are tracked as exact rationals built from the decimal (printed)
value of each float, so a threshold can be spent down to exactly zero
and no spend sequence can push the accumulated total past it. Floats
appear only at the API surface.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Mapping, Sequence

from .errors import BudgetExhausted, EmptyProfiles, ZeroQueries


def exact(value: float) -> Fraction:
    """Decimal-value interpretation of a float (the number repr prints)."""
    return Fraction(str(float(value)))


class TrustClass(Enum):
    EQUAL = "equal"
    WEIGHTED = "weighted"


@dataclass(frozen=True)
class RequesterProfile:
    """Per-requester privacy treatment; lower weight means stronger privacy."""

    requester_id: str
    trust_class: TrustClass = TrustClass.EQUAL
    weight: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.weight) and self.weight > 0):
            raise ValueError(f"weight must be positive and finite, got {self.weight!r}")


@dataclass(frozen=True)
class SpendRecord:
    """One accounting event. Reused rows log the allocation without spending it."""

    query_id: str
    requester_id: str
    epsilon_f: float
    epsilon_rem: float
    reused: bool


class BudgetAccountant:
    """Tracks spending of the privacy budget against a fixed threshold.

    Owned by one peer process and mutated only inside its serialized
    chaincode execution; snapshots handed out are plain floats.

    Args:
        epsilon_t: maximum cumulative budget this provider will ever
            spend on the ledger's data.
    """

    def __init__(self, epsilon_t: float):
        if not (math.isfinite(epsilon_t) and epsilon_t > 0):
            raise ValueError(f"epsilon_t must be positive, got {epsilon_t!r}")
        self._threshold = exact(epsilon_t)
        self._rem = self._threshold
        self.events: List[SpendRecord] = []

    @property
    def epsilon_t(self) -> float:
        return float(self._threshold)

    @property
    def epsilon_rem(self) -> float:
        return float(self._rem)

    @property
    def spend_log(self) -> List[SpendRecord]:
        """Only the rows that actually consumed budget."""
        return [e for e in self.events if not e.reused]

    def try_spend(self, epsilon_f: float, query_id: str, requester_id: str) -> SpendRecord:
        """Spend epsilon_f or raise BudgetExhausted leaving state untouched."""
        need = exact(epsilon_f)
        if need <= 0:
            raise ValueError(f"epsilon_f must be positive, got {epsilon_f!r}")
        if need > self._rem:
            raise BudgetExhausted(
                f"remaining budget {float(self._rem)} cannot cover {epsilon_f}"
            )
        self._rem -= need
        rec = SpendRecord(query_id, requester_id, float(epsilon_f),
                          float(self._rem), reused=False)
        self.events.append(rec)
        return rec

    def record_reuse(self, query_id: str, requester_id: str, epsilon_f: float) -> SpendRecord:
        """Log a cache-served answer; balances do not move."""
        rec = SpendRecord(query_id, requester_id, float(epsilon_f),
                          float(self._rem), reused=True)
        self.events.append(rec)
        return rec

    def accumulated(self) -> float:
        """Total budget spent so far; equals epsilon_t - epsilon_rem."""
        return float(self.accumulated_exact())

    def accumulated_exact(self) -> Fraction:
        return self._threshold - self._rem

    def remaining_exact(self) -> Fraction:
        return self._rem

    def to_csv(self) -> str:
        """Spend log as CSV: query_id, requester_id, epsilon_f, epsilon_rem, reused_flag."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["query_id", "requester_id", "epsilon_f", "epsilon_rem", "reused_flag"])
        for e in self.events:
            writer.writerow([e.query_id, e.requester_id, repr(e.epsilon_f),
                             repr(e.epsilon_rem), int(e.reused)])
        return buf.getvalue()


def allocate_equal(epsilon_t: float, n_queries: int) -> float:
    """Equal split of the threshold across a known query count.

    The share is rounded toward zero (at most a few ulps) so that
    n_queries successive spends always fit inside the threshold under
    exact accounting.
    """
    if n_queries < 1:
        raise ZeroQueries(f"n_queries must be >= 1, got {n_queries!r}")
    if not (math.isfinite(epsilon_t) and epsilon_t > 0):
        raise ValueError(f"epsilon_t must be positive, got {epsilon_t!r}")
    share = epsilon_t / n_queries
    target = exact(epsilon_t)
    while exact(share) * n_queries > target:
        share = math.nextafter(share, 0.0)
    return share


def allocate_weighted(profiles: Sequence[RequesterProfile],
                      query_counts: Mapping[str, int],
                      epsilon_t: float) -> Dict[str, float]:
    """Per-query budget proportional to requester weight.

    epsilon_i = epsilon_t * w_i / sum_j(w_j * c_j), so the whole
    allocation sums to the threshold and a lower weight buys a lower
    epsilon, i.e. stronger privacy for that requester. Shares are
    nudged down by ulps until the exact dot product fits the threshold.
    """
    if not profiles:
        raise EmptyProfiles("no requester profiles given")
    if len({p.requester_id for p in profiles}) != len(profiles):
        raise ValueError("requester profiles must have unique ids")
    counts = {p.requester_id: int(query_counts.get(p.requester_id, 0)) for p in profiles}
    denom = sum(p.weight * counts[p.requester_id] for p in profiles)
    if denom <= 0:
        raise EmptyProfiles("total weighted query count must be positive")

    shares = {p.requester_id: epsilon_t * p.weight / denom for p in profiles}
    target = exact(epsilon_t)

    def dot() -> Fraction:
        return sum((exact(shares[r]) * c for r, c in counts.items()), Fraction(0))

    while dot() > target:
        heaviest = max((r for r, c in counts.items() if c > 0), key=lambda r: shares[r])
        shares[heaviest] = math.nextafter(shares[heaviest], 0.0)
    return shares
