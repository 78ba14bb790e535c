import dataclasses
import json

import pytest

from dpledger import (
    Aggregate,
    BudgetAccountant,
    CategoryKey,
    EmptyBatch,
    Envelope,
    InvalidQuantity,
    MissingField,
    PerturbedResponse,
    QueryRecord,
    WorldState,
    build_block,
    export_blocks,
    export_transactions,
    import_transactions,
    make_genesis,
    replay_chain,
    verify_chain,
)
from dpledger.bench import WorkloadConfig, generate_workload
from dpledger.ledger import GENESIS_PREV_HASH, apply_block

from conftest import make_write


def _chain_of(n_blocks, txs_per_block=3):
    chain = [make_genesis("mychannel")]
    seq = 0
    for _ in range(n_blocks):
        envs = []
        for _ in range(txs_per_block):
            seq += 1
            envs.append(Envelope(tx_id=f"tx{seq}", tx=make_write(quantity=1 + seq % 100)))
        chain.append(build_block(envs, chain[-1]))
    return chain


def _record(key_color="red", qid="q0", eps=0.05, value=42.0, reused=False):
    key = CategoryKey(Aggregate.SUM, None, None, key_color)
    resp = PerturbedResponse(value=value, epsilon_used=eps, reused=reused, query_id=qid)
    return QueryRecord(key=key, epsilon_spent=eps, response=resp, recorded_at=1)


# ---------------------------------------------------------------------------
# writes

def test_single_write_folds_into_one_record(small_state):
    state = WorldState()
    state.apply_write(make_write("Bob", "productX", "red", 10))
    assert len(state.records) == 1
    assert state.aggregate_cell(None, None, None) == (1, 10)


def test_workload_of_500_writes_folds_to_500_records():
    cfg = WorkloadConfig(n_writes=500, n_queries=0)
    schedule = generate_workload(cfg)
    state = WorldState()
    for _, tx in schedule.writes:
        state.apply_write(tx)
    assert len(state.records) == 500


def test_quantity_bounds_enforced():
    state = WorldState()
    with pytest.raises(InvalidQuantity):
        state.apply_write(make_write(quantity=101))
    with pytest.raises(InvalidQuantity):
        state.apply_write(make_write(quantity=0))
    assert state.records == []


def test_empty_string_fields_rejected():
    state = WorldState()
    with pytest.raises(MissingField):
        state.apply_write(make_write(customer=""))


# ---------------------------------------------------------------------------
# blocks and chains

def test_block_links_to_genesis():
    genesis = make_genesis("mychannel")
    block = build_block([Envelope(tx_id="t1", tx=make_write())], genesis)
    assert block.height == 1
    assert block.prev_hash == genesis.block_hash
    assert verify_chain([genesis, block])


def test_block_hash_is_deterministic():
    genesis = make_genesis("mychannel")
    envs = [Envelope(tx_id="t1", tx=make_write())]
    assert build_block(envs, genesis).block_hash == build_block(envs, genesis).block_hash


def test_empty_batch_rejected():
    with pytest.raises(EmptyBatch):
        build_block([], make_genesis("mychannel"))


def test_tampering_one_transaction_breaks_verification():
    chain = _chain_of(4)
    target = chain[2]
    tampered_tx = dataclasses.replace(target.envelopes[1].tx, product_name="bolU")
    tampered_env = dataclasses.replace(target.envelopes[1], tx=tampered_tx)
    envelopes = list(target.envelopes)
    envelopes[1] = tampered_env
    chain[2] = dataclasses.replace(target, envelopes=tuple(envelopes))
    assert verify_chain(chain) is False


def test_fresh_chain_verifies():
    assert verify_chain(_chain_of(10)) is True


def test_altered_prev_hash_detected():
    chain = _chain_of(6)
    chain[5] = dataclasses.replace(chain[5], prev_hash=bytes(32))
    assert verify_chain(chain) is False


def test_reordered_blocks_detected():
    chain = _chain_of(6)
    chain[3], chain[4] = chain[4], chain[3]
    assert verify_chain(chain) is False


def test_genesis_invariants():
    genesis = make_genesis("mychannel")
    assert genesis.height == 0
    assert genesis.prev_hash == GENESIS_PREV_HASH
    assert verify_chain([genesis])
    assert verify_chain([]) is False


def test_verify_never_raises_on_garbage():
    assert verify_chain([None, 3, "block"]) is False


# ---------------------------------------------------------------------------
# query log

def test_record_query_appends_in_order():
    state = WorldState()
    for i in range(3):
        state.record_query(_record(qid=f"q{i}"), eps_rem=1.0 - i * 0.05)
    state.record_query(_record(key_color="blue", qid="q3"), eps_rem=0.8)
    assert len(state.query_log) == 4
    assert [r.response.query_id for r in state.query_log] == ["q0", "q1", "q2", "q3"]


def test_record_query_idempotent_per_query_id():
    state = WorldState()
    rec = _record(qid="dup")
    state.record_query(rec, eps_rem=0.9)
    state.record_query(rec, eps_rem=0.9)
    assert len(state.query_log) == 1


def test_fresh_record_requires_positive_epsilon():
    state = WorldState()
    bad = _record(eps=0.0)
    with pytest.raises(ValueError):
        state.record_query(bad, eps_rem=1.0)


def test_recorded_eps_rem_matches_accountant_arithmetic(rng):
    state = WorldState()
    acct = BudgetAccountant(2.0)
    for i in range(30):
        eps = round(float(rng.uniform(0.01, 0.05)), 4)
        acct.try_spend(eps, f"q{i}", "r")
        state.record_query(_record(qid=f"q{i}", eps=eps), eps_rem=acct.epsilon_rem)
    spent = sum(r.epsilon_spent for r in state.query_log)
    assert state.eps_rem_log[-1] == pytest.approx(acct.epsilon_t - spent, abs=1e-9)


def test_lookup_returns_most_recent_record():
    state = WorldState()
    first = _record(qid="q0", value=10.0)
    second = _record(qid="q1", value=10.0, reused=True)
    state.record_query(first, 0.9)
    state.record_query(second, 0.9)
    assert state.lookup(first.key) is second


# ---------------------------------------------------------------------------
# replay and export

def test_replay_is_deterministic_and_matches_incremental():
    chain = _chain_of(8)
    state_a = replay_chain(chain)
    state_b = replay_chain(chain)
    assert state_a.serialize() == state_b.serialize()

    incremental = WorldState()
    for block in chain[1:]:
        apply_block(incremental, block)
    assert incremental.serialize() == state_a.serialize()


def test_export_import_round_trip(tmp_path):
    chain = _chain_of(5)
    text = export_transactions(chain, "mychannel")
    header, rows = import_transactions(text)
    assert header["channel_id"] == "mychannel"
    assert header["genesis_hash"] == chain[0].block_hash.hex()
    assert len(rows) == 15
    heights = [h for h, _ in rows]
    assert heights == sorted(heights)
    rebuilt = WorldState()
    for height, env in rows:
        rebuilt.apply_write(env.tx, height=height)
    assert len(rebuilt.records) == 15


def test_snapshot_is_isolated_from_later_commits():
    state = WorldState()
    state.apply_write(make_write(quantity=10))
    frozen = state.snapshot()
    state.apply_write(make_write(quantity=20))
    assert len(frozen.records) == 1
    assert frozen.aggregate_cell(None, None, None) == (1, 10)
    assert state.aggregate_cell(None, None, None) == (2, 30)


def test_block_dump_lists_metadata():
    chain = _chain_of(3)
    lines = export_blocks(chain).strip().splitlines()
    assert len(lines) == 4
    row = json.loads(lines[2])
    assert row["height"] == 2
    assert row["tx_count"] == 3
    assert row["prev_hash"] == chain[1].block_hash.hex()
