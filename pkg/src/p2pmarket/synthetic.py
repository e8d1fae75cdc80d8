"""Deterministic synthetic trace set used as the test and demo corpus.

Five households over one sunny day (2013-12-02) at 15-minute resolution: a PV bell curve
between roughly 07:00 and 17:00 and demand with morning and evening peaks.
Array sizes differ enough that some households export at midday while others
still import, so the P2P market actually clears trades.
"""

from __future__ import annotations

import math
from datetime import datetime, timedelta

from .simulator import Reading, Slot, TraceSet

FIXTURE_START = datetime(2013, 12, 2)
SLOTS_PER_DAY = 96

# (prosumer id, PV peak kW, base load kW, morning, midday and evening peak kW)
HOUSEHOLDS = (
    ("P1", 4.0, 0.30, 0.8, 0.3, 1.6),
    ("P2", 1.0, 0.30, 0.9, 1.6, 1.2),
    ("P3", 5.0, 0.35, 0.7, 0.5, 2.2),
    ("P4", 0.5, 0.30, 1.0, 2.0, 1.1),
    ("P5", 3.0, 0.30, 0.6, 0.6, 1.2),
)


def _bump(hour: float, centre: float, width: float) -> float:
    return math.exp(-0.5 * ((hour - centre) / width) ** 2)


def _pv_shape(hour: float) -> float:
    # half-sine between sunrise and sunset, squared for a sharper midday peak
    sunrise, sunset = 7.0, 17.0
    if not sunrise < hour < sunset:
        return 0.0
    return math.sin(math.pi * (hour - sunrise) / (sunset - sunrise)) ** 2


def day_slots(day_index: int = 0, sunny: bool = True):
    start = FIXTURE_START + timedelta(days=day_index)
    hours = 0.25
    slots = []
    for k in range(SLOTS_PER_DAY):
        hour = (k + 0.5) * hours
        readings = {}
        for i, (pid, pv_kw, base_kw, am_kw, mid_kw, pm_kw) in enumerate(HOUSEHOLDS):
            load_kw = (
                base_kw
                + am_kw * _bump(hour, 7.5 + 0.25 * i, 0.8)
                + mid_kw * _bump(hour, 12.5, 2.0)
                + pm_kw * _bump(hour, 19.0 + 0.2 * i, 1.2)
            )
            pv = pv_kw * _pv_shape(hour) * hours if sunny else 0.0
            readings[pid] = Reading(round(load_kw * hours, 4), round(pv, 4))
        slots.append(Slot(start + timedelta(minutes=15 * k), readings))
    return slots


def fixture_traces(sunny_days: int = 1, sunless_days: int = 0) -> TraceSet:
    """Sunny days first, then ``sunless_days`` identical-load days with zero PV."""
    slots = []
    for d in range(sunny_days):
        slots += day_slots(d, sunny=True)
    for d in range(sunless_days):
        slots += day_slots(sunny_days + d, sunny=False)
    return TraceSet(slots, 15)
