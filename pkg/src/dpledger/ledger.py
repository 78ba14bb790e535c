"""Append-only hash-chained block store and the world state it folds into.

Commits are serialized per channel (single writer); committed values are
immutable and safe to share. The world state is a full rebuildable fold
of the chain, which keeps brute-force verification cheap at desk scale.
"""

from __future__ import annotations

import copy
import hashlib
import json
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .errors import EmptyBatch, IoFailure
from .transactions import (
    CategoryKey,
    Envelope,
    QueryRecord,
    QueryTransaction,
    WriteTransaction,
    normalize,
    validate_write,
)

GENESIS_PREV_HASH = bytes(32)

# One aggregation cell per subset of the three filterable attributes.
_ATTR_MASKS = tuple(
    (c, p, k) for c in (False, True) for p in (False, True) for k in (False, True)
)


def _sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class Block:
    """A batch of transactions chained to its predecessor by hash."""

    height: int
    prev_hash: bytes
    envelopes: Tuple[Envelope, ...]
    block_hash: bytes


def compute_block_hash(height: int, prev_hash: bytes,
                       envelopes: Sequence[Envelope]) -> bytes:
    body = b"B" + struct.pack(">q", height) + prev_hash
    body += struct.pack(">I", len(envelopes))
    for env in envelopes:
        raw = env.canonical_bytes()
        body += struct.pack(">I", len(raw)) + raw
    return _sha256(body)


def make_genesis(channel_id: str) -> Block:
    """Empty height-0 block; its hash binds the chain to the channel id."""
    return Block(
        height=0,
        prev_hash=GENESIS_PREV_HASH,
        envelopes=(),
        block_hash=_sha256(b"G" + channel_id.encode("utf-8")),
    )


def build_block(pending: Sequence[Envelope], prev: Block) -> Block:
    """Package pending transactions into the next block of the chain."""
    if not pending:
        raise EmptyBatch("cannot build a block from an empty batch")
    envelopes = tuple(pending)
    height = prev.height + 1
    return Block(
        height=height,
        prev_hash=prev.block_hash,
        envelopes=envelopes,
        block_hash=compute_block_hash(height, prev.block_hash, envelopes),
    )


def verify_chain(chain: Sequence[Block]) -> bool:
    """True iff every link and hash invariant holds. Never raises."""
    try:
        if not chain:
            return False
        genesis = chain[0]
        if genesis.height != 0 or genesis.prev_hash != GENESIS_PREV_HASH:
            return False
        for i in range(1, len(chain)):
            block = chain[i]
            if block.height != chain[i - 1].height + 1:
                return False
            if block.prev_hash != chain[i - 1].block_hash:
                return False
            if block.block_hash != compute_block_hash(
                    block.height, block.prev_hash, block.envelopes):
                return False
        return True
    except Exception:
        return False


@dataclass
class CommittedWrite:
    """A write transaction folded into world state at a commit height."""

    tx: WriteTransaction
    height: int
    norm_customer: str = field(init=False)
    norm_product: str = field(init=False)
    norm_color: str = field(init=False)

    def __post_init__(self):
        self.norm_customer = normalize(self.tx.customer_name)
        self.norm_product = normalize(self.tx.product_name)
        self.norm_color = normalize(self.tx.color)


class WorldState:
    """Materialized key-value view of one channel ledger.

    Holds the committed purchase records, the append-only query log, and
    the remaining-budget snapshots written alongside each log entry.
    """

    def __init__(self, channel_id: str = "mychannel"):
        self.channel_id = channel_id
        self.height = 0
        self.records: List[CommittedWrite] = []
        self.query_log: List[QueryRecord] = []
        self.eps_rem_log: List[float] = []
        self._latest: dict = {}
        self._agg: dict = {}
        self._seen_query_ids: set = set()

    # -- writes

    def apply_write(self, tx: WriteTransaction, height: Optional[int] = None) -> None:
        """Fold one validated write into the record multiset."""
        validate_write(tx)
        rec = CommittedWrite(tx=tx, height=self.height if height is None else height)
        self.records.append(rec)
        triple = (rec.norm_customer, rec.norm_product, rec.norm_color)
        for mask in _ATTR_MASKS:
            cell = tuple(v if keep else None for v, keep in zip(triple, mask))
            slot = self._agg.setdefault(cell, [0, 0])
            slot[0] += 1
            slot[1] += tx.quantity

    def aggregate_cell(self, customer: Optional[str], product: Optional[str],
                       color: Optional[str]) -> Tuple[int, int]:
        """(count, quantity sum) for a normalized attribute cell."""
        return tuple(self._agg.get((customer, product, color), (0, 0)))

    # -- query log

    def record_query(self, rec: QueryRecord, eps_rem: float) -> None:
        """Append a query record and the budget snapshot; idempotent per query id.

        Fresh answers must carry the budget they consumed.
        """
        if not rec.response.reused and rec.epsilon_spent <= 0:
            raise ValueError("fresh query records must have epsilon_spent > 0")
        qid = rec.response.query_id
        if qid in self._seen_query_ids:
            return
        self._seen_query_ids.add(qid)
        self.query_log.append(rec)
        self.eps_rem_log.append(float(eps_rem))
        self._latest[rec.key] = rec

    def lookup(self, key: CategoryKey) -> Optional[QueryRecord]:
        """Most recent record with exactly this key, if any."""
        return self._latest.get(key)

    # -- snapshots and serialization

    def snapshot(self) -> "WorldState":
        return copy.deepcopy(self)

    def serialize(self) -> bytes:
        """Canonical JSON encoding; equal states serialize bit-identically."""
        doc = {
            "channel_id": self.channel_id,
            "height": self.height,
            "records": [
                {"height": r.height, **r.tx.to_dict()} for r in self.records
            ],
            "query_log": [r.to_dict() for r in self.query_log],
            "eps_rem_log": self.eps_rem_log,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def apply_block(state: WorldState, block: Block) -> None:
    """Fold one committed block into a world state."""
    for env in block.envelopes:
        if isinstance(env.tx, WriteTransaction):
            state.apply_write(env.tx, height=block.height)
        elif isinstance(env.tx, QueryTransaction) and env.effect is not None:
            state.record_query(env.effect.record, env.effect.eps_rem)
    state.height = block.height


def replay_chain(chain: Sequence[Block], channel_id: str = "mychannel") -> WorldState:
    """Rebuild world state by folding the whole chain in block order."""
    state = WorldState(channel_id=channel_id)
    for block in chain[1:] if chain and chain[0].height == 0 else chain:
        apply_block(state, block)
    return state


# ---------------------------------------------------------------------------
# JSON-lines export / import

def export_transactions(chain: Sequence[Block], channel_id: str) -> str:
    """One JSON object per committed transaction, after a channel header line."""
    header = {
        "channel_id": channel_id,
        "genesis_hash": chain[0].block_hash.hex() if chain else "",
    }
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    for block in chain:
        for env in block.envelopes:
            row = {"height": block.height, **env.to_dict()}
            lines.append(json.dumps(row, sort_keys=True, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def import_transactions(text: str) -> Tuple[dict, List[Tuple[int, Envelope]]]:
    """Parse a transaction export back into (header, [(height, envelope)])."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise IoFailure("transaction export is empty")
    header = json.loads(lines[0])
    out = []
    for ln in lines[1:]:
        row = json.loads(ln)
        out.append((row["height"], Envelope.from_dict(row)))
    return header, out


def export_blocks(chain: Sequence[Block]) -> str:
    """Block metadata dump, one JSON object per block."""
    lines = []
    for block in chain:
        lines.append(json.dumps({
            "height": block.height,
            "prev_hash": block.prev_hash.hex(),
            "block_hash": block.block_hash.hex(),
            "tx_count": len(block.envelopes),
        }, sort_keys=True, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def write_text(path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as err:
        raise IoFailure(str(err)) from err
