"""Simulated permissioned network: orgs, peers, channels, Solo ordering.

Every transaction walks four phases: (1) proposal, (2) endorsement with
privacy-preserving execution for queries, (3) Solo ordering into blocks,
(4) validation and commit on every channel member. Time is a discrete
tick counter and the whole simulation is a pure function of the
topology, seeds, and submission schedule.

The query cache and the budget accountant live in the channel's shared
ledger state, so every member serves the identical recorded answer. The
peer that executes a query produces the effect envelope; other members
countersign its digest without re-executing, which keeps endorsement
deterministic under fresh noise.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .budget import BudgetAccountant
from .chaincode import ChaincodeEngine
from .errors import (
    ConfigInvalid,
    DPLedgerError,
    NotAuthorized,
    NotMember,
)
from .ledger import Block, WorldState, apply_block, build_block, make_genesis
from .transactions import (
    Endorsement,
    Envelope,
    QueryEffect,
    Transaction,
    WriteTransaction,
    validate_query,
    validate_write,
)

DEFAULT_ORGS = (("org1", ("peer0.org1",)), ("org2", ("peer0.org2",)))


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sign_endorsement(peer_id: str, payload_digest: str) -> Endorsement:
    sig = _digest(peer_id.encode("utf-8") + bytes.fromhex(payload_digest))
    return Endorsement(peer_id=peer_id, payload_digest=payload_digest, signature=sig)


def endorsement_valid(end: Endorsement, payload_digest: str) -> bool:
    if end.payload_digest != payload_digest:
        return False
    expected = _digest(end.peer_id.encode("utf-8") + bytes.fromhex(payload_digest))
    return end.signature == expected


class ReceiptStatus(Enum):
    PENDING = "pending"
    COMMITTED = "committed"
    CACHED = "cached"
    REJECTED = "rejected"


@dataclass
class PhaseRecord:
    phase: str
    tick: int
    ok: bool
    info: str = ""


@dataclass
class TransactionReceipt:
    """Outcome of one submission across the four flow phases."""

    tx_id: str
    kind: str
    submit_tick: int
    status: ReceiptStatus = ReceiptStatus.PENDING
    phases: List[PhaseRecord] = field(default_factory=list)
    commit_height: Optional[int] = None
    commit_tick: Optional[int] = None
    reject_reason: str = ""
    response: Optional[object] = None

    def record_phase(self, phase: str, tick: int, ok: bool, info: str = "") -> None:
        self.phases.append(PhaseRecord(phase, tick, ok, info))

    @property
    def latency(self) -> Optional[int]:
        if self.commit_tick is None:
            return None
        return self.commit_tick - self.submit_tick


class Peer:
    """One blockchain peer: chain replica and world state per channel."""

    def __init__(self, peer_id: str, org_id: str, seed_seq: np.random.SeedSequence):
        self.peer_id = peer_id
        self.org_id = org_id
        self.rng = np.random.default_rng(seed_seq)
        self.chains: Dict[str, List[Block]] = {}
        self.states: Dict[str, WorldState] = {}
        self.engines: Dict[str, ChaincodeEngine] = {}

    def join(self, channel_id: str, genesis: Block, engine: ChaincodeEngine) -> None:
        self.chains[channel_id] = [genesis]
        self.states[channel_id] = WorldState(channel_id=channel_id)
        self.engines[channel_id] = engine


class Channel:
    """Shared ledger scope: members, policy, execution state, audit store."""

    def __init__(self, channel_id: str, members: Sequence[str],
                 endorsement_policy: int, epsilon_t: float):
        if not 1 <= endorsement_policy <= len(members):
            raise ValueError(
                f"endorsement policy {endorsement_policy} outside [1, {len(members)}]"
            )
        self.channel_id = channel_id
        self.members = list(members)
        self.endorsement_policy = endorsement_policy
        self.genesis = make_genesis(channel_id)
        self.chain: List[Block] = [self.genesis]
        self.state = WorldState(channel_id=channel_id)
        self.accountant = BudgetAccountant(epsilon_t)
        self.audit: List[Block] = []


class SoloOrderer:
    """Single ordering peer: FIFO batching per channel by arrival tick."""

    def __init__(self, max_batch_size: int = 10, batch_timeout: int = 2):
        self.max_batch_size = max_batch_size
        self.batch_timeout = batch_timeout
        self._pending: Dict[str, List[Tuple[int, Envelope]]] = {}

    def enqueue(self, channel_id: str, env: Envelope, tick: int) -> None:
        self._pending.setdefault(channel_id, []).append((tick, env))

    def has_pending(self) -> bool:
        return any(self._pending.values())

    def cut_due(self, tick: int) -> List[Tuple[str, List[Envelope]]]:
        """Batches ready at this tick: full batches plus timed-out remainders."""
        out = []
        for channel_id, queue in self._pending.items():
            while len(queue) >= self.max_batch_size:
                batch = [env for _, env in queue[: self.max_batch_size]]
                del queue[: self.max_batch_size]
                out.append((channel_id, batch))
            if queue and tick - queue[0][0] >= self.batch_timeout:
                out.append((channel_id, [env for _, env in queue]))
                queue.clear()
        return out


class Network:
    """Deterministic driver for the whole simulated network."""

    def __init__(self, *, orgs=DEFAULT_ORGS, channel_id: str = "mychannel",
                 endorsement_policy: int = 1, batch_size: int = 10,
                 batch_timeout: int = 2, epsilon_t: float = 1.0,
                 sensitivity_bound: float = 100.0, dp_enabled: bool = True,
                 reuse_enabled: bool = True, seed: int = 0):
        self.clock = 0
        self.seed = seed
        self.orderer = SoloOrderer(max_batch_size=batch_size, batch_timeout=batch_timeout)
        self.peers: Dict[str, Peer] = {}
        self.channels: Dict[str, Channel] = {}
        self.clients: Dict[str, set] = {}
        self.receipts: List[TransactionReceipt] = []
        self._receipts_by_id: Dict[str, TransactionReceipt] = {}
        self._submit_seq = 0
        self._dp_enabled = dp_enabled
        self._reuse_enabled = reuse_enabled
        self._sensitivity_bound = sensitivity_bound

        root = np.random.SeedSequence([seed, 1])
        peer_seeds = root.spawn(sum(len(peer_ids) for _, peer_ids in orgs))
        i = 0
        for org_id, peer_ids in orgs:
            for peer_id in peer_ids:
                self.peers[peer_id] = Peer(peer_id, org_id, peer_seeds[i])
                i += 1

        self.create_channel(channel_id, list(self.peers),
                            endorsement_policy=endorsement_policy, epsilon_t=epsilon_t)

    # -- topology

    def create_channel(self, channel_id: str, members: Sequence[str], *,
                       endorsement_policy: int = 1, epsilon_t: float = 1.0) -> Channel:
        channel = Channel(channel_id, members, endorsement_policy, epsilon_t)
        self.channels[channel_id] = channel
        for peer_id in members:
            engine = ChaincodeEngine(
                dp_enabled=self._dp_enabled,
                reuse_enabled=self._reuse_enabled,
                sensitivity_bound=self._sensitivity_bound,
            )
            self.peers[peer_id].join(channel_id, channel.genesis, engine)
        return channel

    def register_client(self, client_id: str, channels: Optional[Sequence[str]] = None) -> None:
        self.clients[client_id] = set(channels if channels is not None else self.channels)

    # -- phase 2: endorsement

    def endorse(self, peer: Peer, payload_digest: str, channel_id: str) -> Endorsement:
        """Signed approval of a proposal payload by a channel member."""
        channel = self.channels[channel_id]
        if peer.peer_id not in channel.members:
            raise NotMember(f"{peer.peer_id} is not a member of {channel_id}")
        return sign_endorsement(peer.peer_id, payload_digest)

    def _collect_endorsements(self, channel: Channel, env: Envelope) -> Envelope:
        digest = _digest(env.payload_bytes())
        ends = tuple(self.endorse(self.peers[m], digest, channel.channel_id)
                     for m in channel.members)
        return Envelope(tx_id=env.tx_id, tx=env.tx, effect=env.effect, endorsements=ends)

    def _endorse_tx(self, channel: Channel, tx: Transaction, tx_id: str,
                    eps_f: Optional[float],
                    target_peer: Optional[str]):
        """Run phase 2. Returns (envelope or None, response or None)."""
        if isinstance(tx, WriteTransaction):
            validate_write(tx)
            env = self._collect_endorsements(channel, Envelope(tx_id=tx_id, tx=tx))
            return env, None

        validate_query(tx)
        executor_id = target_peer if target_peer is not None else channel.members[0]
        if executor_id not in channel.members:
            raise NotMember(f"{executor_id} is not a member of {channel.channel_id}")
        executor = self.peers[executor_id]
        engine = executor.engines[channel.channel_id]
        if eps_f is None:
            if engine.dp_enabled:
                raise ConfigInvalid("eps_f is required for queries when noise is enabled")
            eps_f = 0.0
        response = engine.answer_query(tx, channel.state, channel.accountant,
                                       eps_f, executor.rng, query_id=tx_id)
        if response.reused:
            # Served from the recorded answer; nothing new goes to ordering.
            return None, response
        effect = None
        if engine.dp_enabled:
            effect = QueryEffect(record=channel.state.query_log[-1],
                                 eps_rem=channel.accountant.epsilon_rem)
        env = self._collect_endorsements(channel, Envelope(tx_id=tx_id, tx=tx, effect=effect))
        return env, response

    # -- submission (phases 1-3; phase 4 happens on tick)

    def submit(self, client_id: str, tx: Transaction, *,
               channel_id: str = "mychannel", eps_f: Optional[float] = None,
               target_peer: Optional[str] = None) -> TransactionReceipt:
        if channel_id not in self.channels:
            raise ConfigInvalid(f"unknown channel {channel_id!r}")
        channel = self.channels[channel_id]
        self._submit_seq += 1
        kind = "write" if isinstance(tx, WriteTransaction) else "query"
        tx_id = _digest(
            channel_id.encode() + self._submit_seq.to_bytes(8, "big") + tx.canonical_bytes()
        )
        receipt = TransactionReceipt(tx_id=tx_id, kind=kind, submit_tick=self.clock)
        self.receipts.append(receipt)
        self._receipts_by_id[tx_id] = receipt

        # Phase 1: proposal from a known, authorized participant.
        if client_id not in self.clients or channel_id not in self.clients[client_id]:
            receipt.record_phase("proposal", self.clock, False, "client not authorized")
            receipt.status = ReceiptStatus.REJECTED
            receipt.reject_reason = NotAuthorized.__name__
            return receipt
        receipt.record_phase("proposal", self.clock, True)

        # Phase 2: endorsement (queries execute the privacy module here).
        try:
            envelope, response = self._endorse_tx(channel, tx, tx_id, eps_f, target_peer)
        except DPLedgerError as err:
            receipt.record_phase("endorsement", self.clock, False, str(err))
            receipt.status = ReceiptStatus.REJECTED
            receipt.reject_reason = type(err).__name__
            return receipt
        receipt.record_phase("endorsement", self.clock, True)
        receipt.response = response

        if envelope is None:
            receipt.status = ReceiptStatus.CACHED
            receipt.commit_tick = self.clock
            return receipt

        # Phase 3: hand over to the ordering service.
        self.orderer.enqueue(channel.channel_id, envelope, self.clock)
        receipt.record_phase("ordering", self.clock, True, "enqueued")
        return receipt

    # -- phase 4: ordering output, validation, commit

    def tick(self) -> None:
        """Advance simulated time by one tick and commit any due blocks."""
        self.clock += 1
        for channel_id, batch in self.orderer.cut_due(self.clock):
            channel = self.channels[channel_id]
            block = build_block(batch, channel.chain[-1])
            self.deliver_and_commit(channel, block)

    def run_until_idle(self, max_ticks: int = 1_000_000) -> None:
        ticks = 0
        while self.orderer.has_pending():
            self.tick()
            ticks += 1
            if ticks > max_ticks:
                raise RuntimeError("orderer failed to drain")

    def deliver_and_commit(self, channel: Channel, block: Block) -> Dict[str, bool]:
        """Validate the block on every member; append everywhere or audit it."""
        results: Dict[str, bool] = {}
        problems: List[str] = []
        for env in block.envelopes:
            digest = _digest(env.payload_bytes())
            valid = sum(1 for e in env.endorsements if endorsement_valid(e, digest))
            if valid < channel.endorsement_policy:
                problems.append(f"{env.tx_id}: endorsement policy not met")
                continue
            if isinstance(env.tx, WriteTransaction):
                try:
                    validate_write(env.tx)
                except DPLedgerError as err:
                    problems.append(f"{env.tx_id}: {err}")

        link_ok = (block.prev_hash == channel.chain[-1].block_hash
                   and block.height == channel.chain[-1].height + 1)
        if problems or not link_ok:
            channel.audit.append(block)
            for peer_id in channel.members:
                results[peer_id] = False
            for env in block.envelopes:
                receipt = self._receipts_by_id.get(env.tx_id)
                if receipt is not None:
                    receipt.record_phase("validation", self.clock, False,
                                         "; ".join(problems) or "broken chain link")
                    receipt.status = ReceiptStatus.REJECTED
                    receipt.reject_reason = "ValidationFailure"
            return results

        channel.chain.append(block)
        for env in block.envelopes:
            if isinstance(env.tx, WriteTransaction):
                channel.state.apply_write(env.tx, height=block.height)
        channel.state.height = block.height
        for peer_id in channel.members:
            peer = self.peers[peer_id]
            peer.chains[channel.channel_id].append(block)
            apply_block(peer.states[channel.channel_id], block)
            results[peer_id] = True
        for env in block.envelopes:
            receipt = self._receipts_by_id.get(env.tx_id)
            if receipt is not None:
                receipt.record_phase("validation", self.clock, True)
                receipt.status = ReceiptStatus.COMMITTED
                receipt.commit_height = block.height
                receipt.commit_tick = self.clock
        return results

    # -- metrics

    def committed_receipts(self) -> List[TransactionReceipt]:
        return [r for r in self.receipts if r.status is ReceiptStatus.COMMITTED]

    def receipts_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["tx_id", "kind", "status", "submit_tick", "commit_tick",
                         "commit_height", "latency", "reject_reason"])
        for r in self.receipts:
            writer.writerow([
                r.tx_id, r.kind, r.status.value, r.submit_tick,
                "" if r.commit_tick is None else r.commit_tick,
                "" if r.commit_height is None else r.commit_height,
                "" if r.latency is None else r.latency,
                r.reject_reason,
            ])
        return buf.getvalue()
