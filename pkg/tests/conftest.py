import numpy as np
import pytest

from dpledger import (
    Aggregate,
    QueryPredicate,
    QueryTransaction,
    WorldState,
    WriteTransaction,
)


def make_write(customer="Bob", product="bolt", color="red", quantity=10):
    return WriteTransaction(
        contract_id="supply-ledger",
        contract_version="1.0",
        contract_function="record_purchase",
        timeout_ms=3000,
        product_name=product,
        color=color,
        quantity=quantity,
        customer_name=customer,
    )


def make_query(aggregate=Aggregate.SUM, customer=None, product=None, color=None,
               requester="distributor-a"):
    return QueryTransaction(
        contract_id="supply-ledger",
        contract_version="1.0",
        contract_function="stat_query",
        timeout_ms=3000,
        read_only=True,
        predicate=QueryPredicate(customer, product, color),
        aggregate=aggregate,
        requester_id=requester,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_state():
    """World state with a handful of known records."""
    state = WorldState()
    rows = [
        ("Bob", "bolt", "red", 10),
        ("Bob", "bolt", "blue", 20),
        ("Claire", "valve", "red", 30),
        ("Claire", "bolt", "red", 5),
        ("David", "gear", "green", 50),
    ]
    for customer, product, color, qty in rows:
        state.apply_write(make_write(customer, product, color, qty))
    return state
