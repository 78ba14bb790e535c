"""Transaction bodies, query predicates, category keys, and canonical encodings.

A channel ledger records two transaction kinds: purchase writes and
read-only statistical queries (COUNT/SUM over the write attributes).
Canonical encodings are length-prefixed and field-ordered so that every
hash derived from them is reproducible across platforms and runs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

from .errors import (
    InvalidQuantity,
    MissingField,
    UnsupportedAggregate,
    ValidationFailure,
)

# Bound on items purchased in a single write transaction.
QUANTITY_MIN = 1
QUANTITY_MAX = 100


class Aggregate(Enum):
    """Statistical aggregates the query interface supports."""

    COUNT = "COUNT"
    SUM = "SUM"


def normalize(value: str) -> str:
    """Canonical attribute form: whitespace-trimmed and case-folded."""
    return value.strip().casefold()


# ---------------------------------------------------------------------------
# encoding helpers

def _u32(n: int) -> bytes:
    return struct.pack(">I", n)


def _i64(n: int) -> bytes:
    return struct.pack(">q", n)


def _f64(x: float) -> bytes:
    return struct.pack(">d", x)


def _text(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _u32(len(raw)) + raw


def _opt_text(s: Optional[str]) -> bytes:
    if s is None:
        return b"\x00"
    return b"\x01" + _text(s)


# ---------------------------------------------------------------------------
# transaction bodies

@dataclass(frozen=True)
class WriteTransaction:
    """Purchase record appended to the channel ledger."""

    contract_id: str
    contract_version: str
    contract_function: str
    timeout_ms: int
    product_name: str
    color: str
    quantity: int
    customer_name: str

    def canonical_bytes(self) -> bytes:
        return b"".join((
            b"W",
            _text(self.contract_id),
            _text(self.contract_version),
            _text(self.contract_function),
            _i64(self.timeout_ms),
            _text(self.product_name),
            _text(self.color),
            _i64(self.quantity),
            _text(self.customer_name),
        ))

    def to_dict(self) -> dict:
        return {
            "kind": "write",
            "contract_id": self.contract_id,
            "contract_version": self.contract_version,
            "contract_function": self.contract_function,
            "timeout_ms": self.timeout_ms,
            "product_name": self.product_name,
            "color": self.color,
            "quantity": self.quantity,
            "customer_name": self.customer_name,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WriteTransaction":
        return cls(
            contract_id=d["contract_id"],
            contract_version=d["contract_version"],
            contract_function=d["contract_function"],
            timeout_ms=d["timeout_ms"],
            product_name=d["product_name"],
            color=d["color"],
            quantity=d["quantity"],
            customer_name=d["customer_name"],
        )


def validate_write(tx: WriteTransaction) -> None:
    """Reject writes that violate the transaction-body invariants."""
    for name in ("contract_id", "contract_version", "contract_function",
                 "product_name", "color", "customer_name"):
        if not getattr(tx, name):
            raise MissingField(f"write transaction field {name!r} is empty")
    if not isinstance(tx.quantity, int) or not QUANTITY_MIN <= tx.quantity <= QUANTITY_MAX:
        raise InvalidQuantity(
            f"quantity {tx.quantity!r} outside [{QUANTITY_MIN}, {QUANTITY_MAX}]"
        )


@dataclass(frozen=True)
class QueryPredicate:
    """Attribute filter for a query; None selects every value of that attribute."""

    customer_name: Optional[str] = None
    product_name: Optional[str] = None
    color: Optional[str] = None

    def normalized(self) -> "QueryPredicate":
        return QueryPredicate(
            None if self.customer_name is None else normalize(self.customer_name),
            None if self.product_name is None else normalize(self.product_name),
            None if self.color is None else normalize(self.color),
        )

    def canonical_bytes(self) -> bytes:
        return (b"P" + _opt_text(self.customer_name)
                + _opt_text(self.product_name) + _opt_text(self.color))

    def to_dict(self) -> dict:
        return {
            "customer_name": self.customer_name,
            "product_name": self.product_name,
            "color": self.color,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QueryPredicate":
        return cls(d.get("customer_name"), d.get("product_name"), d.get("color"))


@dataclass(frozen=True)
class QueryTransaction:
    """Read-only statistical query against a channel ledger."""

    contract_id: str
    contract_version: str
    contract_function: str
    timeout_ms: int
    read_only: bool
    predicate: QueryPredicate
    aggregate: Aggregate
    requester_id: str

    def canonical_bytes(self) -> bytes:
        return b"".join((
            b"Q",
            _text(self.contract_id),
            _text(self.contract_version),
            _text(self.contract_function),
            _i64(self.timeout_ms),
            b"\x01" if self.read_only else b"\x00",
            self.predicate.canonical_bytes(),
            _text(self.aggregate.value),
            _text(self.requester_id),
        ))

    def to_dict(self) -> dict:
        return {
            "kind": "query",
            "contract_id": self.contract_id,
            "contract_version": self.contract_version,
            "contract_function": self.contract_function,
            "timeout_ms": self.timeout_ms,
            "read_only": self.read_only,
            "predicate": self.predicate.to_dict(),
            "aggregate": self.aggregate.value,
            "requester_id": self.requester_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QueryTransaction":
        return cls(
            contract_id=d["contract_id"],
            contract_version=d["contract_version"],
            contract_function=d["contract_function"],
            timeout_ms=d["timeout_ms"],
            read_only=d["read_only"],
            predicate=QueryPredicate.from_dict(d["predicate"]),
            aggregate=Aggregate(d["aggregate"]),
            requester_id=d["requester_id"],
        )


def validate_query(tx: QueryTransaction) -> None:
    if not isinstance(tx.aggregate, Aggregate):
        raise UnsupportedAggregate(f"unsupported aggregate {tx.aggregate!r}")
    if not tx.read_only:
        raise ValidationFailure("query transactions must be read-only")
    if not tx.requester_id:
        raise MissingField("query transaction field 'requester_id' is empty")


# ---------------------------------------------------------------------------
# query categorization and responses

@dataclass(frozen=True)
class CategoryKey:
    """Cache identity of a query: aggregate plus normalized attribute tuple.

    Two queries share a key only when the aggregate and every attribute
    match exactly after normalization; absent attributes stay None.
    """

    aggregate: Aggregate
    customer_name: Optional[str]
    product_name: Optional[str]
    color: Optional[str]

    def canonical_bytes(self) -> bytes:
        return (b"K" + _text(self.aggregate.value)
                + _opt_text(self.customer_name)
                + _opt_text(self.product_name)
                + _opt_text(self.color))

    def label(self) -> str:
        parts = [self.aggregate.value]
        for name, value in (("customer", self.customer_name),
                            ("product", self.product_name),
                            ("color", self.color)):
            parts.append(f"{name}={'*' if value is None else value}")
        return " ".join(parts)

    def to_dict(self) -> dict:
        return {
            "aggregate": self.aggregate.value,
            "customer_name": self.customer_name,
            "product_name": self.product_name,
            "color": self.color,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CategoryKey":
        return cls(Aggregate(d["aggregate"]), d.get("customer_name"),
                   d.get("product_name"), d.get("color"))


@dataclass(frozen=True)
class PerturbedResponse:
    """Query answer handed back to a requester, with noise provenance."""

    value: float
    epsilon_used: float
    reused: bool
    query_id: str

    def canonical_bytes(self) -> bytes:
        return (b"R" + _f64(self.value) + _f64(self.epsilon_used)
                + (b"\x01" if self.reused else b"\x00") + _text(self.query_id))

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "epsilon_used": self.epsilon_used,
            "reused": self.reused,
            "query_id": self.query_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PerturbedResponse":
        return cls(d["value"], d["epsilon_used"], d["reused"], d["query_id"])


@dataclass(frozen=True)
class QueryRecord:
    """Entry of the on-ledger query log: key, spent budget, cached answer."""

    key: CategoryKey
    epsilon_spent: float
    response: PerturbedResponse
    recorded_at: int

    def canonical_bytes(self) -> bytes:
        return (b"L" + self.key.canonical_bytes() + _f64(self.epsilon_spent)
                + self.response.canonical_bytes() + _i64(self.recorded_at))

    def to_dict(self) -> dict:
        return {
            "key": self.key.to_dict(),
            "epsilon_spent": self.epsilon_spent,
            "response": self.response.to_dict(),
            "recorded_at": self.recorded_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QueryRecord":
        return cls(
            key=CategoryKey.from_dict(d["key"]),
            epsilon_spent=d["epsilon_spent"],
            response=PerturbedResponse.from_dict(d["response"]),
            recorded_at=d["recorded_at"],
        )


# ---------------------------------------------------------------------------
# endorsement and committed envelopes

@dataclass(frozen=True)
class Endorsement:
    """Simulated signed approval: signature = digest of (peer id, payload digest)."""

    peer_id: str
    payload_digest: str
    signature: str

    def to_dict(self) -> dict:
        return {
            "peer_id": self.peer_id,
            "payload_digest": self.payload_digest,
            "signature": self.signature,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Endorsement":
        return cls(d["peer_id"], d["payload_digest"], d["signature"])


@dataclass(frozen=True)
class QueryEffect:
    """Chaincode write-set of a fresh query: the log entry plus the budget left."""

    record: QueryRecord
    eps_rem: float

    def canonical_bytes(self) -> bytes:
        return b"E" + self.record.canonical_bytes() + _f64(self.eps_rem)

    def to_dict(self) -> dict:
        return {"record": self.record.to_dict(), "eps_rem": self.eps_rem}

    @classmethod
    def from_dict(cls, d: dict) -> "QueryEffect":
        return cls(QueryRecord.from_dict(d["record"]), d["eps_rem"])


Transaction = Union[WriteTransaction, QueryTransaction]


@dataclass(frozen=True)
class Envelope:
    """A transaction as committed to a block: id, body, effects, endorsements."""

    tx_id: str
    tx: Transaction
    effect: Optional[QueryEffect] = None
    endorsements: tuple = ()

    def payload_bytes(self) -> bytes:
        body = _text(self.tx_id) + self.tx.canonical_bytes()
        if self.effect is not None:
            body += self.effect.canonical_bytes()
        return body

    def canonical_bytes(self) -> bytes:
        body = self.payload_bytes()
        for end in self.endorsements:
            body += _text(end.peer_id) + _text(end.payload_digest) + _text(end.signature)
        return body

    def to_dict(self) -> dict:
        d = {"tx_id": self.tx_id, "tx": self.tx.to_dict()}
        if self.effect is not None:
            d["effect"] = self.effect.to_dict()
        if self.endorsements:
            d["endorsements"] = [e.to_dict() for e in self.endorsements]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Envelope":
        tx_dict = d["tx"]
        if tx_dict["kind"] == "write":
            tx: Transaction = WriteTransaction.from_dict(tx_dict)
        elif tx_dict["kind"] == "query":
            tx = QueryTransaction.from_dict(tx_dict)
        else:
            raise ValueError(f"unknown transaction kind {tx_dict['kind']!r}")
        effect = QueryEffect.from_dict(d["effect"]) if "effect" in d else None
        ends = tuple(Endorsement.from_dict(e) for e in d.get("endorsements", ()))
        return cls(tx_id=d["tx_id"], tx=tx, effect=effect, endorsements=ends)
