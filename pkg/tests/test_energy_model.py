import math

import pytest
from hypothesis import given, strategies as st

from p2pmarket.energy_model import (
    TariffConfig,
    aggregate,
    compute_slot_state,
    partition_roles,
)
from p2pmarket.errors import ValidationError

energy = st.floats(min_value=0, max_value=50, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize(
    "demand, gen, consumed, surplus, deficit",
    [
        (2.0, 3.0, 2.0, 1.0, 0.0),
        (3.0, 1.5, 1.5, 0.0, 1.5),
        (0.0, 0.0, 0.0, 0.0, 0.0),
    ],
)
def test_slot_state_examples(demand, gen, consumed, surplus, deficit):
    s = compute_slot_state(1, demand, gen)
    assert (s.consumed, s.surplus, s.deficit) == (consumed, surplus, deficit)


@pytest.mark.parametrize("field, args", [("demand", (-1.0, 1.0)), ("generation", (1.0, math.nan)), ("demand", (math.inf, 0.0))])
def test_slot_state_rejects_bad_input(field, args):
    with pytest.raises(ValidationError, match=field):
        compute_slot_state("x", *args)


@given(energy, energy)
def test_slot_state_invariants(demand, gen):
    s = compute_slot_state("p", demand, gen)
    assert s.consumed == min(demand, gen)
    assert s.consumed <= demand and s.consumed <= gen
    assert s.surplus >= 0 and s.deficit >= 0
    assert s.surplus * s.deficit == 0


def test_partition_examples():
    states = [compute_slot_state(1, 0, 1.0), compute_slot_state(2, 1.5, 0), compute_slot_state(3, 0, 0)]
    p = partition_roles(states)
    assert p.sellers == {1} and p.buyers == {2} and p.neutrals == {3}

    zeros = [compute_slot_state(i, 0, 0) for i in range(3)]
    p = partition_roles(zeros)
    assert not p.sellers and not p.buyers and p.neutrals == {0, 1, 2}

    p = partition_roles([compute_slot_state(1, 0, 2), compute_slot_state(2, 1, 3)])
    assert p.sellers == {1, 2} and not p.buyers


def test_partition_rejects_duplicates_and_empty():
    with pytest.raises(ValidationError, match="duplicate"):
        partition_roles([compute_slot_state(1, 0, 1), compute_slot_state(1, 1, 0)])
    with pytest.raises(ValidationError):
        partition_roles([])


def test_partition_uses_energy_tolerance():
    p = partition_roles([compute_slot_state("a", 0, 1e-12), compute_slot_state("b", 1e-10, 0)])
    assert p.neutrals == {"a", "b"}


@given(st.lists(st.tuples(energy, energy), min_size=1, max_size=8), st.randoms())
def test_partition_and_aggregate_order_independent(pairs, rnd):
    states = [compute_slot_state(i, d, g) for i, (d, g) in enumerate(pairs)]
    shuffled = list(states)
    rnd.shuffle(shuffled)
    assert partition_roles(states) == partition_roles(shuffled)
    assert aggregate(states) == aggregate(shuffled)
    p = partition_roles(states)
    assert p.sellers | p.buyers | p.neutrals == set(range(len(pairs)))
    assert not (p.sellers & p.buyers or p.sellers & p.neutrals or p.buyers & p.neutrals)


def test_aggregate_examples():
    a = aggregate([compute_slot_state(1, 0, 90), compute_slot_state(2, 0, 10), compute_slot_state(3, 10, 0)])
    assert (a.total_surplus, a.total_deficit, a.net_position) == (100, 10, 90)
    a = aggregate([compute_slot_state(1, 0, 0)])
    assert (a.total_surplus, a.total_deficit, a.net_position) == (0, 0, 0)
    a = aggregate([compute_slot_state(1, 0, 5), compute_slot_state(2, 5, 0)])
    assert a.net_position == 0


def test_tariff_validation():
    TariffConfig(24.6, 10)
    TariffConfig(5, 5)  # degenerate but representable
    with pytest.raises(ValidationError):
        TariffConfig(10, 24.6)
    with pytest.raises(ValidationError):
        TariffConfig(10, -1)
    with pytest.raises(ValidationError, match="strictly above|buy_price > "):
        TariffConfig(5, 5).require_spread()
