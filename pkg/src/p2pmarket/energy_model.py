"""Per-slot energy accounting for prosumers with rooftop PV and no storage."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

from .errors import ValidationError

#: Quantities at or below this many kWh are treated as zero when assigning roles.
ENERGY_TOL = 1e-9
#: Absolute tolerance (cents) for every monetary equality check.
MONEY_TOL = 1e-6

ProsumerId = Hashable


def _check_quantity(name: str, value: float) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a number, got {value!r}") from None
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    if value < 0:
        raise ValidationError(f"{name} must be non-negative, got {value!r}")
    return value


@dataclass(frozen=True)
class TariffConfig:
    """Grid prices in cents/kWh.

    ``grid_buy_price`` is what a prosumer pays the grid, ``grid_sell_price`` the
    feed-in tariff it receives. Equal prices are accepted here as a degenerate
    tariff; use :meth:`require_spread` (as the loaders do) when the strict
    ``buy > sell`` precondition of the stability results matters.
    """

    grid_buy_price: float
    grid_sell_price: float
    slot_minutes: int = 15
    timezone: str = "UTC"

    def __post_init__(self):
        buy = _check_quantity("grid_buy_price", self.grid_buy_price)
        sell = _check_quantity("grid_sell_price", self.grid_sell_price)
        if buy < sell:
            raise ValidationError(
                f"grid_buy_price ({buy}) must not be below grid_sell_price ({sell})"
            )
        if isinstance(self.slot_minutes, bool) or not isinstance(self.slot_minutes, int):
            raise ValidationError(f"slot_minutes must be an integer, got {self.slot_minutes!r}")
        if self.slot_minutes <= 0:
            raise ValidationError(f"slot_minutes must be positive, got {self.slot_minutes}")
        object.__setattr__(self, "grid_buy_price", buy)
        object.__setattr__(self, "grid_sell_price", sell)

    def require_spread(self) -> "TariffConfig":
        if not self.grid_buy_price > self.grid_sell_price:
            raise ValidationError(
                "tariff must satisfy grid_buy_price > grid_sell_price "
                f"(got buy={self.grid_buy_price}, sell={self.grid_sell_price}); "
                "a non-empty core is only guaranteed when the grid buy price "
                "strictly exceeds the feed-in tariff"
            )
        return self


@dataclass(frozen=True)
class ProsumerSlotState:
    prosumer_id: ProsumerId
    demand: float
    generation: float
    consumed: float
    surplus: float
    deficit: float

    @property
    def sells(self) -> bool:
        return self.surplus > ENERGY_TOL

    @property
    def buys(self) -> bool:
        return self.deficit > ENERGY_TOL

    @property
    def effective_surplus(self) -> float:
        return self.surplus if self.sells else 0.0

    @property
    def effective_deficit(self) -> float:
        return self.deficit if self.buys else 0.0

    @property
    def net(self) -> float:
        """Signed net position: positive for sellers, negative for buyers."""
        return self.effective_surplus - self.effective_deficit


@dataclass(frozen=True)
class RolePartition:
    sellers: frozenset
    buyers: frozenset
    neutrals: frozenset

    @property
    def has_cross_trade(self) -> bool:
        return bool(self.sellers) and bool(self.buyers)


@dataclass(frozen=True)
class SlotAggregates:
    total_surplus: float
    total_deficit: float

    @property
    def net_position(self) -> float:
        return self.total_surplus - self.total_deficit


def compute_slot_state(prosumer_id: ProsumerId, demand: float, generation: float) -> ProsumerSlotState:
    """Own-consumption first; whatever is left over is surplus or deficit."""
    demand = _check_quantity("demand", demand)
    generation = _check_quantity("generation", generation)
    consumed = min(demand, generation)
    return ProsumerSlotState(
        prosumer_id=prosumer_id,
        demand=demand,
        generation=generation,
        consumed=consumed,
        surplus=generation - consumed,
        deficit=demand - consumed,
    )


def check_unique_ids(states: Iterable[ProsumerSlotState]) -> None:
    seen = set()
    for s in states:
        if s.prosumer_id in seen:
            raise ValidationError(f"duplicate prosumer id {s.prosumer_id!r} in slot")
        seen.add(s.prosumer_id)


def partition_roles(states: Sequence[ProsumerSlotState]) -> RolePartition:
    if not states:
        raise ValidationError("cannot partition an empty slot")
    check_unique_ids(states)
    sellers, buyers, neutrals = set(), set(), set()
    for s in states:
        if s.sells:
            sellers.add(s.prosumer_id)
        elif s.buys:
            buyers.add(s.prosumer_id)
        else:
            neutrals.add(s.prosumer_id)
    return RolePartition(frozenset(sellers), frozenset(buyers), frozenset(neutrals))


def aggregate(states: Sequence[ProsumerSlotState]) -> SlotAggregates:
    # fsum is correctly rounded, so the totals do not depend on state order
    return SlotAggregates(
        total_surplus=math.fsum(s.effective_surplus for s in states),
        total_deficit=math.fsum(s.effective_deficit for s in states),
    )
