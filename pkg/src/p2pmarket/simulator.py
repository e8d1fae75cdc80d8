"""Run the P2P scheme and the feed-in-tariff baseline over a trace set."""

from __future__ import annotations

import enum
import math
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from typing import Callable, Dict, List, Optional, Sequence, Tuple
from zoneinfo import ZoneInfo

from .coalition import AuditCaps, StabilityReport, stability_report
from .energy_model import ENERGY_TOL, MONEY_TOL, ProsumerSlotState, TariffConfig, compute_slot_state
from .errors import ValidationError
from .pricing import PriceQuote, Settlement, clear_slot

THREADS_ENV = "P2PMARKET_THREADS"


class Scheme(str, enum.Enum):
    P2P = "P2P"
    FIT = "FiT"


@dataclass(frozen=True)
class Reading:
    demand: float
    pv: float


@dataclass
class Slot:
    timestamp: datetime
    readings: Dict[str, Reading]


@dataclass
class TraceSet:
    """Uniformly spaced slots sharing one prosumer roster."""

    slots: List[Slot]
    slot_minutes: int = 15

    def __post_init__(self):
        if self.slot_minutes <= 0:
            raise ValidationError(f"slot_minutes must be positive, got {self.slot_minutes}")
        step = timedelta(minutes=self.slot_minutes)
        roster = self.roster
        for prev, cur in zip(self.slots, self.slots[1:]):
            if cur.timestamp - prev.timestamp != step:
                raise ValidationError(
                    f"slots {prev.timestamp.isoformat()} and {cur.timestamp.isoformat()} "
                    f"are not {self.slot_minutes} minutes apart"
                )
        for slot in self.slots:
            if set(slot.readings) != set(roster):
                raise ValidationError(
                    f"slot {slot.timestamp.isoformat()} roster differs from the first slot"
                )
            # canonical reading order = roster order
            slot.readings = {pid: slot.readings[pid] for pid in roster}

    @property
    def roster(self) -> Tuple:
        return tuple(self.slots[0].readings) if self.slots else ()

    def __len__(self):
        return len(self.slots)

    def concatenate(self, other: "TraceSet") -> "TraceSet":
        if self.slot_minutes != other.slot_minutes:
            raise ValidationError("cannot join trace sets with different slot lengths")
        return TraceSet(list(self.slots) + list(other.slots), self.slot_minutes)


def slot_states(slot: Slot) -> List[ProsumerSlotState]:
    return [compute_slot_state(pid, r.demand, r.pv) for pid, r in slot.readings.items()]


@dataclass
class SlotRecord:
    timestamp: datetime
    costs: Dict[str, float]
    quote: Optional[PriceQuote] = None
    settlement: Optional[Settlement] = None

    @property
    def cross_trade(self) -> bool:
        """True when at least one seller and one buyer traded with each other."""
        return self.settlement is not None and self.settlement.traded_energy > ENERGY_TOL


@dataclass
class SimulationReport:
    scheme: Scheme
    roster: Tuple
    slot_minutes: int
    timezone: str
    records: List[SlotRecord]
    per_prosumer_total_cost: Dict[str, float] = field(default_factory=dict)
    per_day_cost: Dict[Tuple[str, date], float] = field(default_factory=dict)

    @classmethod
    def assemble(cls, scheme, roster, slot_minutes, timezone, records):
        tz = ZoneInfo(timezone)
        totals = {pid: math.fsum(r.costs[pid] for r in records) for pid in roster}
        day_parts = defaultdict(list)
        for r in records:
            day = local_date(r.timestamp, tz)
            for pid in roster:
                day_parts[(pid, day)].append(r.costs[pid])
        per_day = {
            key: math.fsum(day_parts[key])
            for key in sorted(day_parts, key=lambda k: (roster.index(k[0]), k[1]))
        }
        return cls(Scheme(scheme), tuple(roster), slot_minutes, timezone, list(records), totals, per_day)

    @property
    def timestamps(self) -> List[datetime]:
        return [r.timestamp for r in self.records]


@dataclass
class SavingsReport:
    roster: Tuple
    fit_total_cost: Dict[str, float]
    p2p_total_cost: Dict[str, float]
    per_prosumer_absolute_saving: Dict[str, float]
    per_prosumer_percent_saving: Dict[str, float]
    per_day_saving: Dict[Tuple[str, date], float]
    per_day_fit_cost: Dict[Tuple[str, date], float]
    per_day_p2p_cost: Dict[Tuple[str, date], float]

    @property
    def never_detrimental(self) -> bool:
        return all(v >= -MONEY_TOL for v in self.per_day_saving.values()) and all(
            v >= -MONEY_TOL for v in self.per_prosumer_absolute_saving.values()
        )


def local_date(ts: datetime, tz: ZoneInfo) -> date:
    return ts.astimezone(tz).date() if ts.tzinfo is not None else ts.date()


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValidationError(f"{THREADS_ENV} must be >= 0, got {n}")
    return n or (os.cpu_count() or 1)


def _map_slots(fn, slots):
    # executor.map preserves input order, so output never depends on completion order
    workers = min(worker_count(), len(slots))
    if workers <= 1:
        return [fn(s) for s in slots]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, slots))


def _with_context(fn):
    def wrapped(slot):
        try:
            return fn(slot)
        except ValidationError as exc:
            raise ValidationError(f"slot {slot.timestamp.isoformat()}: {exc}") from exc

    return wrapped


def _p2p_slot(tariff):
    def run(slot):
        _, quote, settlement = clear_slot(slot_states(slot), tariff)
        return SlotRecord(slot.timestamp, settlement.per_prosumer_cost, quote, settlement)

    return _with_context(run)


def fit_cost(state: ProsumerSlotState, tariff: TariffConfig) -> float:
    """Stand-alone cost of a prosumer that trades only with the grid."""
    if state.buys:
        return tariff.grid_buy_price * state.deficit
    if state.sells:
        return -(tariff.grid_sell_price * state.surplus)
    return 0.0


def _fit_slot(tariff):
    def run(slot):
        return SlotRecord(slot.timestamp, {s.prosumer_id: fit_cost(s, tariff) for s in slot_states(slot)})

    return _with_context(run)


def run_p2p(traces: TraceSet, tariff: TariffConfig) -> SimulationReport:
    records = _map_slots(_p2p_slot(tariff), traces.slots)
    return SimulationReport.assemble(Scheme.P2P, traces.roster, traces.slot_minutes, tariff.timezone, records)


def run_fit(traces: TraceSet, tariff: TariffConfig) -> SimulationReport:
    records = _map_slots(_fit_slot(tariff), traces.slots)
    return SimulationReport.assemble(Scheme.FIT, traces.roster, traces.slot_minutes, tariff.timezone, records)


def compare(p2p: SimulationReport, fit: SimulationReport) -> SavingsReport:
    if set(p2p.roster) != set(fit.roster):
        raise ValidationError(
            f"reports cover different prosumers: {sorted(p2p.roster)} vs {sorted(fit.roster)}"
        )
    if p2p.timestamps != fit.timestamps:
        raise ValidationError("reports cover different slot ranges")
    if set(p2p.per_day_cost) != set(fit.per_day_cost):
        raise ValidationError("reports aggregate days differently (timezone mismatch?)")
    roster = tuple(p2p.roster)
    absolute, percent = {}, {}
    for pid in roster:
        f, p = fit.per_prosumer_total_cost[pid], p2p.per_prosumer_total_cost[pid]
        absolute[pid] = f - p
        percent[pid] = 100.0 * absolute[pid] / f if f > 0 else 0.0
    per_day = {k: fit.per_day_cost[k] - p2p.per_day_cost[k] for k in p2p.per_day_cost}
    return SavingsReport(
        roster=roster,
        fit_total_cost=dict(fit.per_prosumer_total_cost),
        p2p_total_cost=dict(p2p.per_prosumer_total_cost),
        per_prosumer_absolute_saving=absolute,
        per_prosumer_percent_saving=percent,
        per_day_saving=per_day,
        per_day_fit_cost=dict(fit.per_day_cost),
        per_day_p2p_cost=dict(p2p.per_day_cost),
    )


SlotFilter = Callable[[Slot], bool]


def trading_slots_only(slot: Slot) -> bool:
    states = slot_states(slot)
    return any(s.sells for s in states) and any(s.buys for s in states)


def run_stability_audit(
    traces: TraceSet,
    tariff: TariffConfig,
    slot_filter: Optional[SlotFilter] = None,
    caps: AuditCaps = AuditCaps(),
) -> List[StabilityReport]:
    """Audit every selected slot; checks above a cap are skipped with a per-slot notice."""
    selected = [s for s in traces.slots if slot_filter is None or slot_filter(s)]

    def audit(slot):
        states = slot_states(slot)
        _, _, settlement = clear_slot(states, tariff)
        return stability_report(states, tariff, settlement.payoffs, caps, timestamp=slot.timestamp)

    return _map_slots(_with_context(audit), selected)
