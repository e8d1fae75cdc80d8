"""Mid-market-rate clearing and per-slot settlement."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Dict, Sequence

from .coalition import allocation_payoffs, grand_value
from .energy_model import (
    ENERGY_TOL,
    ProsumerSlotState,
    RolePartition,
    SlotAggregates,
    TariffConfig,
    aggregate,
    partition_roles,
)
from .errors import ValidationError


class PricingCase(str, enum.Enum):
    BALANCED = "Balanced"
    SURPLUS_HEAVY = "SurplusHeavy"
    DEFICIT_HEAVY = "DeficitHeavy"
    NO_TRADE = "NoTrade"


@dataclass(frozen=True)
class PriceQuote:
    case: PricingCase
    mid_price: float
    seller_price: float
    buyer_price: float

    @property
    def trades(self) -> bool:
        return self.case is not PricingCase.NO_TRADE


@dataclass(frozen=True)
class Settlement:
    payoffs: Dict
    grid_energy: float
    grid_cashflow: float
    traded_energy: float = 0.0

    @property
    def per_prosumer_cost(self) -> Dict:
        return {k: (-v if v else 0.0) for k, v in self.payoffs.items()}


def mid_price(tariff: TariffConfig) -> float:
    return (tariff.grid_sell_price + tariff.grid_buy_price) / 2.0


def quote_slot(aggregates: SlotAggregates, tariff: TariffConfig) -> PriceQuote:
    """Clear one slot.

    Internal trades happen at the mid price. The long side of the market
    averages that price with the grid price it gets for the residual, so the
    residual volume is the short side's deficit (or surplus), not its demand.
    """
    p_tr = mid_price(tariff)
    sur, dfc = aggregates.total_surplus, aggregates.total_deficit
    net = aggregates.net_position
    if sur <= ENERGY_TOL and dfc <= ENERGY_TOL:
        return PriceQuote(PricingCase.NO_TRADE, p_tr, p_tr, p_tr)
    if abs(net) <= ENERGY_TOL:
        return PriceQuote(PricingCase.BALANCED, p_tr, p_tr, p_tr)
    if net > 0:
        if dfc <= ENERGY_TOL:
            seller = tariff.grid_sell_price
        else:
            seller = (dfc * p_tr + (sur - dfc) * tariff.grid_sell_price) / sur
        return PriceQuote(PricingCase.SURPLUS_HEAVY, p_tr, seller, p_tr)
    if sur <= ENERGY_TOL:
        buyer = tariff.grid_buy_price
    else:
        buyer = (sur * p_tr + (dfc - sur) * tariff.grid_buy_price) / dfc
    return PriceQuote(PricingCase.DEFICIT_HEAVY, p_tr, p_tr, buyer)


def settle_slot(
    partition: RolePartition,
    states: Sequence[ProsumerSlotState],
    quote: PriceQuote,
    tariff: TariffConfig,
) -> Settlement:
    ids = {s.prosumer_id for s in states}
    if ids != partition.sellers | partition.buyers | partition.neutrals:
        raise ValidationError("partition and slot states cover different prosumer sets")
    agg = aggregate(states)
    expected = quote_slot(agg, tariff)
    if expected.case is not quote.case:
        raise ValidationError(
            f"quote case {quote.case.value} does not match slot (expected {expected.case.value})"
        )
    payoffs = allocation_payoffs(partition, quote, states)
    return Settlement(
        payoffs=payoffs,
        grid_energy=agg.net_position,
        grid_cashflow=grand_value(states, tariff),
        traded_energy=min(agg.total_surplus, agg.total_deficit),
    )


def clear_slot(states: Sequence[ProsumerSlotState], tariff: TariffConfig):
    """Partition, quote and settle one slot in a single call."""
    partition = partition_roles(states)
    quote = quote_slot(aggregate(states), tariff)
    return partition, quote, settle_slot(partition, states, quote, tariff)


def payoff_total(settlement: Settlement) -> float:
    return math.fsum(settlement.payoffs.values())
