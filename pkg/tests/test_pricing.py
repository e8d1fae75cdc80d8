import math

import pytest
from hypothesis import assume, given, settings, strategies as st

from p2pmarket.coalition import grand_value
from p2pmarket.energy_model import SlotAggregates, TariffConfig, compute_slot_state, partition_roles, aggregate
from p2pmarket.errors import ValidationError
from p2pmarket.pricing import PricingCase, clear_slot, mid_price, quote_slot, settle_slot


def test_mid_price(paper_tariff):
    assert mid_price(paper_tariff) == pytest.approx(17.3)
    assert mid_price(TariffConfig(0, 0)) == 0
    assert mid_price(TariffConfig(12.5, 12.5)) == 12.5


@pytest.mark.parametrize(
    "totals, case, seller, buyer",
    [
        ((5, 5), PricingCase.BALANCED, 17.3, 17.3),
        # (10 * 17.3 + 90 * 10) / 100
        ((100, 10), PricingCase.SURPLUS_HEAVY, 10.73, 17.3),
        # (2 * 17.3 + 8 * 24.6) / 10
        ((2, 10), PricingCase.DEFICIT_HEAVY, 17.3, 23.14),
        ((0, 0), PricingCase.NO_TRADE, 17.3, 17.3),
    ],
)
def test_quote_examples(paper_tariff, totals, case, seller, buyer):
    q = quote_slot(SlotAggregates(*totals), paper_tariff)
    assert q.case is case
    assert q.seller_price == pytest.approx(seller, abs=1e-12)
    assert q.buyer_price == pytest.approx(buyer, abs=1e-12)
    assert q.mid_price == pytest.approx(17.3)


def test_one_sided_market_gets_grid_prices_exactly(paper_tariff):
    assert quote_slot(SlotAggregates(7.0, 0.0), paper_tariff).seller_price == 10.0
    assert quote_slot(SlotAggregates(0.0, 3.3), paper_tariff).buyer_price == 24.6


tariffs = st.tuples(
    st.floats(0, 50, allow_nan=False), st.floats(0.01, 50, allow_nan=False)
).map(lambda t: TariffConfig(t[0] + t[1], t[0]))
totals = st.floats(0, 100, allow_nan=False)


@given(totals, totals, tariffs)
def test_prices_within_grid_band(sur, dfc, tariff):
    q = quote_slot(SlotAggregates(sur, dfc), tariff)
    for p in (q.seller_price, q.buyer_price):
        assert tariff.grid_sell_price - 1e-9 <= p <= tariff.grid_buy_price + 1e-9
    if q.case is PricingCase.BALANCED:
        assert q.seller_price == q.buyer_price == q.mid_price


@given(totals, totals, totals, tariffs)
def test_monotonicity(fixed, d1, d2, tariff):
    lo, hi = sorted((d1, d2))
    assume(fixed > hi + 1e-6)
    # surplus-heavy: seller price rises with the deficit it can serve
    a = quote_slot(SlotAggregates(fixed, lo), tariff).seller_price
    b = quote_slot(SlotAggregates(fixed, hi), tariff).seller_price
    assert a <= b + 1e-9
    # deficit-heavy: buyer price falls as more surplus becomes available
    a = quote_slot(SlotAggregates(lo, fixed), tariff).buyer_price
    b = quote_slot(SlotAggregates(hi, fixed), tariff).buyer_price
    assert a >= b - 1e-9


def _settle(states, tariff):
    return clear_slot(states, tariff)[2]


def test_settlement_examples(paper_tariff):
    s = _settle([compute_slot_state("s", 0, 5), compute_slot_state("b", 5, 0)], paper_tariff)
    assert s.payoffs["s"] == pytest.approx(86.5) and s.payoffs["b"] == pytest.approx(-86.5)
    assert s.grid_cashflow == 0 and s.grid_energy == 0

    states = [compute_slot_state(1, 0, 90), compute_slot_state(2, 0, 10), compute_slot_state(3, 10, 0)]
    s = _settle(states, paper_tariff)
    assert s.grid_cashflow == pytest.approx(900.0)
    assert s.grid_energy == pytest.approx(90.0)
    assert math.fsum(s.payoffs.values()) == pytest.approx(900.0, abs=1e-6)

    s = _settle([compute_slot_state(i, 0, 0) for i in range(3)], paper_tariff)
    assert set(s.payoffs.values()) == {0.0} and s.grid_cashflow == 0
    assert all(str(v) == "0.0" for v in s.per_prosumer_cost.values())


def test_settle_rejects_mismatch(paper_tariff):
    states = [compute_slot_state(1, 0, 5), compute_slot_state(2, 5, 0)]
    other = [compute_slot_state(1, 0, 5), compute_slot_state(3, 5, 0)]
    part = partition_roles(states)
    q = quote_slot(aggregate(states), paper_tariff)
    with pytest.raises(ValidationError):
        settle_slot(part, other, q, paper_tariff)
    wrong = quote_slot(SlotAggregates(100, 10), paper_tariff)
    with pytest.raises(ValidationError, match="quote case"):
        settle_slot(part, states, wrong, paper_tariff)


slot = st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=10)


@settings(max_examples=300)
@given(slot, tariffs)
def test_efficiency_and_fit_dominance(pairs, tariff):
    states = [compute_slot_state(i, d, g) for i, (d, g) in enumerate(pairs)]
    part, q, s = clear_slot(states, tariff)
    assert math.fsum(s.payoffs.values()) == pytest.approx(grand_value(states, tariff), abs=1e-6)
    assert s.grid_energy == pytest.approx(aggregate(states).net_position)
    for st_ in states:
        pid = st_.prosumer_id
        if pid in part.sellers:
            assert s.payoffs[pid] >= tariff.grid_sell_price * st_.surplus - 1e-9
            if part.buyers:
                assert q.seller_price > tariff.grid_sell_price or q.case is PricingCase.NO_TRADE
        elif pid in part.buyers:
            assert -s.payoffs[pid] <= tariff.grid_buy_price * st_.deficit + 1e-9
            if part.sellers:
                assert q.buyer_price < tariff.grid_buy_price
