"""Trace and tariff ingestion; report emission in json or csv.

Trace files are long-format CSV with the header
``timestamp,prosumer_id,demand_kwh,pv_kwh``. Tariff files are JSON objects.
Every emitted document carries :data:`SCHEMA_VERSION`; floats are written
with six decimals so repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
import io as _stdio
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

from .coalition import StabilityReport
from .energy_model import TariffConfig
from .errors import SourceError, ValidationError
from .simulator import (
    Reading,
    SavingsReport,
    Scheme,
    SimulationReport,
    Slot,
    SlotRecord,
    TraceSet,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = "p2pmarket-report/1"
TRACE_HEADER = ("timestamp", "prosumer_id", "demand_kwh", "pv_kwh")
TARIFF_KEYS = {
    "grid_buy_price_cents_per_kwh": True,
    "grid_sell_price_cents_per_kwh": True,
    "slot_minutes": False,
    "timezone": False,
}
FORMATS = ("json", "csv")

Source = Union[str, os.PathLike, _stdio.TextIOBase]


def _read_text(source) -> Tuple[str, str]:
    if hasattr(source, "read"):
        return source.read(), getattr(source, "name", "<stream>")
    path = Path(source)
    try:
        return path.read_text(encoding="utf-8"), str(path)
    except OSError as exc:
        raise SourceError(f"cannot read file: {exc.strerror or exc}", str(path)) from None


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text)


def _energy(text: str, field: str, name: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise SourceError(f"{field} is not a decimal number: {text!r}", name, line) from None
    if not math.isfinite(value):
        raise SourceError(f"{field} must be finite, got {text!r}", name, line)
    if value < 0:
        raise SourceError(f"{field} must be non-negative, got {text!r}", name, line)
    return value


# -- traces ------------------------------------------------------------------------


def load_traces(source: Source, slot_minutes: int = 15, strict: bool = True) -> TraceSet:
    """Parse a long-format trace file into a validated :class:`TraceSet`.

    The roster is taken from the earliest slot. In lenient mode, missing
    readings and whole missing slots are zero-filled with a warning; strict
    mode (the default) rejects them.
    """
    text, name = _read_text(source)
    reader = csv.reader(_stdio.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise SourceError("empty file, expected a header row", name, 1) from None
    if tuple(h.strip() for h in header) != TRACE_HEADER:
        raise SourceError(f"header must be {','.join(TRACE_HEADER)}, got {','.join(header)}", name, 1)

    slots: Dict[datetime, Dict[str, Reading]] = {}
    seen_at: Dict[Tuple[datetime, str], int] = {}
    aware = None
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(TRACE_HEADER):
            raise SourceError(f"expected {len(TRACE_HEADER)} fields, got {len(row)}", name, line)
        ts_text, pid, demand, pv = (c.strip() for c in row)
        try:
            ts = parse_timestamp(ts_text)
        except ValueError:
            raise SourceError(f"invalid ISO-8601 timestamp {ts_text!r}", name, line) from None
        if aware is None:
            aware = ts.tzinfo is not None
        elif aware != (ts.tzinfo is not None):
            raise SourceError("timestamps mix offset-aware and naive values", name, line)
        if not pid:
            raise SourceError("empty prosumer_id", name, line)
        key = (ts, pid)
        if key in seen_at:
            raise SourceError(
                f"duplicate reading for prosumer {pid!r} at {ts.isoformat()} "
                f"(first seen on line {seen_at[key]})",
                name,
                line,
            )
        seen_at[key] = line
        slots.setdefault(ts, {})[pid] = Reading(
            _energy(demand, "demand_kwh", name, line), _energy(pv, "pv_kwh", name, line)
        )

    if not slots:
        return TraceSet([], slot_minutes)
    times = sorted(slots)
    roster = list(slots[times[0]])
    step = timedelta(minutes=slot_minutes)
    filled: List[Slot] = []
    for i, ts in enumerate(times):
        if i:
            gap = ts - times[i - 1]
            if gap % step:
                raise SourceError(
                    f"timestamps {times[i - 1].isoformat()} and {ts.isoformat()} are not a "
                    f"multiple of {slot_minutes} minutes apart",
                    name,
                )
            missing = times[i - 1] + step
            while missing < ts:
                if strict:
                    raise SourceError(f"missing slot at {missing.isoformat()}", name)
                log.warning("%s: zero-filling missing slot %s", name, missing.isoformat())
                filled.append(Slot(missing, {pid: Reading(0.0, 0.0) for pid in roster}))
                missing += step
        readings = slots[ts]
        extra = [pid for pid in readings if pid not in roster]
        if extra:
            raise SourceError(
                f"prosumer(s) {extra} at {ts.isoformat()} are not in the roster of the first slot",
                name,
                seen_at[(ts, extra[0])],
            )
        absent = [pid for pid in roster if pid not in readings]
        if absent:
            if strict:
                raise SourceError(f"slot {ts.isoformat()} has no reading for prosumer(s) {absent}", name)
            log.warning("%s: zero-filling %s at %s", name, absent, ts.isoformat())
        filled.append(Slot(ts, {pid: readings.get(pid, Reading(0.0, 0.0)) for pid in roster}))
    try:
        return TraceSet(filled, slot_minutes)
    except ValidationError as exc:
        raise SourceError(str(exc), name) from None


def dump_traces(traces: TraceSet) -> str:
    buf = _stdio.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for slot in traces.slots:
        for pid, r in slot.readings.items():
            w.writerow([slot.timestamp.isoformat(), pid, _fmt(r.demand), _fmt(r.pv)])
    return buf.getvalue()


# -- tariff --------------------------------------------------------------------------


def load_tariff(source: Source) -> TariffConfig:
    text, name = _read_text(source)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SourceError(f"invalid JSON: {exc.msg}", name, exc.lineno) from None
    if not isinstance(doc, dict):
        raise SourceError("tariff file must hold a JSON object", name)
    unknown = sorted(set(doc) - TARIFF_KEYS.keys())
    if unknown:
        raise SourceError(f"unknown tariff key(s): {', '.join(unknown)}", name)
    missing = [k for k, required in TARIFF_KEYS.items() if required and k not in doc]
    if missing:
        raise SourceError(f"missing tariff key(s): {', '.join(missing)}", name)
    for key in ("grid_buy_price_cents_per_kwh", "grid_sell_price_cents_per_kwh"):
        if isinstance(doc[key], bool) or not isinstance(doc[key], (int, float)):
            raise SourceError(f"{key} must be a number", name)
    timezone = doc.get("timezone", "UTC")
    if not isinstance(timezone, str):
        raise SourceError("timezone must be a string", name)
    try:
        ZoneInfo(timezone)
    except (ZoneInfoNotFoundError, ValueError):
        raise SourceError(f"unknown timezone {timezone!r}", name) from None
    buy = doc["grid_buy_price_cents_per_kwh"]
    sell = doc["grid_sell_price_cents_per_kwh"]
    if not buy > sell:
        raise SourceError(
            f"grid_buy_price_cents_per_kwh ({buy}) must exceed grid_sell_price_cents_per_kwh "
            f"({sell}); the core of the trading game is only guaranteed non-empty when the "
            "grid buy price is strictly above the feed-in tariff",
            name,
        )
    try:
        return TariffConfig(buy, sell, doc.get("slot_minutes", 15), timezone).require_spread()
    except ValidationError as exc:
        raise SourceError(str(exc), name) from None


def dump_tariff(tariff: TariffConfig) -> str:
    return render_json(
        {
            "grid_buy_price_cents_per_kwh": tariff.grid_buy_price,
            "grid_sell_price_cents_per_kwh": tariff.grid_sell_price,
            "slot_minutes": tariff.slot_minutes,
            "timezone": tariff.timezone,
        }
    )


# -- rendering -------------------------------------------------------------------------


def _fmt(x: float) -> str:
    if not math.isfinite(x):
        raise ValidationError(f"cannot serialize non-finite value {x!r}")
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def render_json(obj, indent: int = 2) -> str:
    """JSON with fixed six-decimal floats and insertion-ordered keys."""

    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if o is None or isinstance(o, (bool, str)):
            return json.dumps(o)
        if isinstance(o, int):
            return str(o)
        if isinstance(o, float):
            return _fmt(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in o) + "\n" + end + "]"
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return enc(obj, 0) + "\n"


def render_csv(header: Sequence[str], rows) -> str:
    buf = _stdio.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else _fmt(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


@dataclass
class PriceSeries:
    """Per-slot trade prices next to the grid prices; trade prices are None when nobody cross-trades."""

    timestamps: List[datetime]
    seller_price: List[Optional[float]]
    buyer_price: List[Optional[float]]
    grid_sell_price: float
    grid_buy_price: float


def price_series(report: SimulationReport, tariff: TariffConfig) -> PriceSeries:
    if report.scheme is not Scheme.P2P:
        raise ValidationError("price series need a P2P report")
    sell, buy = [], []
    for r in report.records:
        traded = r.quote is not None and r.cross_trade
        sell.append(r.quote.seller_price if traded else None)
        buy.append(r.quote.buyer_price if traded else None)
    return PriceSeries(report.timestamps, sell, buy, tariff.grid_sell_price, tariff.grid_buy_price)


def _simulation_doc(rep: SimulationReport):
    slots = []
    for r in rep.records:
        entry = {"timestamp": r.timestamp.isoformat()}
        if r.quote is not None:
            entry["case"] = r.quote.case.value
            entry["seller_price"] = r.quote.seller_price
            entry["buyer_price"] = r.quote.buyer_price
        if r.settlement is not None:
            entry["grid_energy_kwh"] = r.settlement.grid_energy
            entry["grid_cashflow_cents"] = r.settlement.grid_cashflow
        entry["cost_cents"] = {pid: r.costs[pid] for pid in rep.roster}
        slots.append(entry)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "simulation",
        "scheme": rep.scheme.value,
        "slot_minutes": rep.slot_minutes,
        "timezone": rep.timezone,
        "roster": list(rep.roster),
        "total_cost_cents": {pid: rep.per_prosumer_total_cost[pid] for pid in rep.roster},
        "per_day_cost_cents": [
            {"prosumer_id": pid, "date": d.isoformat(), "cost_cents": v}
            for (pid, d), v in rep.per_day_cost.items()
        ],
        "slots": slots,
    }


def _savings_doc(rep: SavingsReport):
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "savings",
        "roster": list(rep.roster),
        "prosumers": [
            {
                "prosumer_id": pid,
                "fit_cost_cents": rep.fit_total_cost[pid],
                "p2p_cost_cents": rep.p2p_total_cost[pid],
                "saving_cents": rep.per_prosumer_absolute_saving[pid],
                "saving_percent": rep.per_prosumer_percent_saving[pid],
            }
            for pid in rep.roster
        ],
        "per_day": [
            {
                "prosumer_id": pid,
                "date": d.isoformat(),
                "fit_cost_cents": rep.per_day_fit_cost[(pid, d)],
                "p2p_cost_cents": rep.per_day_p2p_cost[(pid, d)],
                "saving_cents": v,
            }
            for (pid, d), v in rep.per_day_saving.items()
        ],
    }


def _members(m):
    return [str(x) for x in m]


def _stability_entry(rep: StabilityReport):
    entry = {
        "timestamp": rep.timestamp.isoformat() if rep.timestamp is not None else None,
        "n_prosumers": rep.n_prosumers,
        "superadditive": rep.superadditive,
        "core_member": rep.core_member,
        "witness_in_core": None if rep.witness_core is None else rep.witness_core.core_member,
        "balanced": rep.balanced,
    }
    if rep.superadditivity is not None:
        entry["superadditivity_violations"] = [
            {
                "first": _members(v.first),
                "second": _members(v.second),
                "union_value": v.union_value,
                "sum_value": v.sum_value,
            }
            for v in rep.superadditivity.violations
        ]
    if rep.core is not None:
        entry["payoff_total"] = rep.core.payoff_total
        entry["blocking_subsets"] = [
            {"members": _members(b.members), "payoff_sum": b.payoff_sum, "value": b.value, "slack": b.slack}
            for b in rep.core.blocking
        ]
    if rep.balancedness is not None:
        entry["lp_optimum"] = rep.balancedness.optimum
        entry["grand_value"] = rep.balancedness.grand_value
    entry["witness_allocation"] = {str(k): v for k, v in rep.witness_allocation.items()}
    entry["notices"] = list(rep.notices)
    return entry


def render_report(report, fmt: str = "json") -> str:
    """Render any report type (or a list of stability reports) to text."""
    if fmt not in FORMATS:
        raise ValidationError(f"unknown format {fmt!r}; expected one of {', '.join(FORMATS)}")
    if isinstance(report, SimulationReport):
        if fmt == "json":
            return render_json(_simulation_doc(report))
        rows = (
            (report.scheme.value, r.timestamp.isoformat(), pid, r.costs[pid])
            for r in report.records
            for pid in report.roster
        )
        return render_csv(("scheme", "timestamp", "prosumer_id", "cost_cents"), rows)
    if isinstance(report, SavingsReport):
        if fmt == "json":
            return render_json(_savings_doc(report))
        rows = (
            (pid, d.isoformat(), report.per_day_fit_cost[(pid, d)], report.per_day_p2p_cost[(pid, d)], v)
            for (pid, d), v in report.per_day_saving.items()
        )
        return render_csv(("prosumer_id", "date", "fit_cost_cents", "p2p_cost_cents", "saving_cents"), rows)
    if isinstance(report, PriceSeries):
        if fmt == "json":
            return render_json(
                {
                    "schema_version": SCHEMA_VERSION,
                    "kind": "price_series",
                    "grid_sell_price": report.grid_sell_price,
                    "grid_buy_price": report.grid_buy_price,
                    "slots": [
                        {"timestamp": t.isoformat(), "seller_price": s, "buyer_price": b}
                        for t, s, b in zip(report.timestamps, report.seller_price, report.buyer_price)
                    ],
                }
            )
        rows = (
            (t.isoformat(), s, b, report.grid_sell_price, report.grid_buy_price)
            for t, s, b in zip(report.timestamps, report.seller_price, report.buyer_price)
        )
        return render_csv(("timestamp", "seller_price", "buyer_price", "grid_sell_price", "grid_buy_price"), rows)
    if isinstance(report, StabilityReport):
        report = [report]
    if isinstance(report, list) and all(isinstance(r, StabilityReport) for r in report):
        if fmt == "json":
            return render_json(
                {
                    "schema_version": SCHEMA_VERSION,
                    "kind": "stability",
                    "slots": [_stability_entry(r) for r in report],
                }
            )
        rows = []
        for r in report:
            e = _stability_entry(r)
            rows.append(
                (
                    e["timestamp"],
                    r.n_prosumers,
                    _flag(r.superadditive),
                    _flag(r.core_member),
                    _flag(e["witness_in_core"]),
                    _flag(r.balanced),
                    e.get("lp_optimum"),
                    e.get("grand_value"),
                    len(e.get("blocking_subsets", [])),
                    "; ".join(r.notices),
                )
            )
        header = (
            "timestamp", "n_prosumers", "superadditive", "core_member", "witness_in_core",
            "balanced", "lp_optimum", "grand_value", "blocking_subsets", "notices",
        )
        return render_csv(header, rows)
    raise ValidationError(f"cannot emit object of type {type(report).__name__}")


def _flag(v):
    return "" if v is None else str(bool(v)).lower()


def write_atomic(destination, text: str) -> None:
    """Write ``text`` to ``destination`` via a temp file and rename, so readers never see partial output."""
    path = Path(destination)
    directory = path.parent if str(path.parent) else Path(".")
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc.strerror or exc}") from None
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        Path(tmp).unlink(missing_ok=True)
        raise ValidationError(f"cannot write {path}: {exc.strerror or exc}") from None


def write_all_atomic(outputs: Dict[Path, str]) -> None:
    """Stage every file first, then rename; nothing is renamed if any staging fails."""
    staged = []
    try:
        for path, text in outputs.items():
            path = Path(path)
            fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            staged.append((tmp, path))
    except OSError as exc:
        for tmp, _ in staged:
            Path(tmp).unlink(missing_ok=True)
        raise ValidationError(f"cannot write output: {exc.strerror or exc}") from None
    for tmp, path in staged:
        os.replace(tmp, path)


def emit_report(report, fmt: str, destination) -> None:
    text = render_report(report, fmt)
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        write_atomic(destination, text)


# -- reading reports back ------------------------------------------------------------------


def load_simulation_report(source: Source) -> SimulationReport:
    """Reload a json simulation report (costs only; quotes are not reconstructed)."""
    text, name = _read_text(source)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SourceError(f"invalid JSON: {exc.msg}", name, exc.lineno) from None
    if not isinstance(doc, dict) or doc.get("kind") != "simulation":
        raise SourceError("not a simulation report", name)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SourceError(
            f"schema version {doc.get('schema_version')!r} is not supported (expected {SCHEMA_VERSION})",
            name,
        )
    try:
        roster = tuple(doc["roster"])
        records = [
            SlotRecord(parse_timestamp(s["timestamp"]), {pid: float(s["cost_cents"][pid]) for pid in roster})
            for s in doc["slots"]
        ]
        return SimulationReport.assemble(
            doc["scheme"], roster, int(doc["slot_minutes"]), doc["timezone"], records
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SourceError(f"malformed simulation report: {exc}", name) from None
