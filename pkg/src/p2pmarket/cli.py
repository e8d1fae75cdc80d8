"""Command-line front end.

Exit codes: 0 success, 1 invalid input or flags, 2 internal error. Human
summaries go to stdout; machine-readable output only to ``--out`` paths
(``quote`` prints its json to stdout).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io as p2pio
from .coalition import BALANCEDNESS_MAX_N, CORE_MAX_N, SUPERADDITIVITY_MAX_N, AuditCaps
from .energy_model import SlotAggregates, TariffConfig
from .errors import ValidationError
from .pricing import quote_slot
from .simulator import compare, run_fit, run_p2p, run_stability_audit, trading_slots_only
from .synthetic import fixture_traces

EXIT_OK, EXIT_INVALID, EXIT_INTERNAL = 0, 1, 2

log = logging.getLogger("p2pmarket")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _bounded_int(lo, hi):
    def parse(text):
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
        if not lo <= value <= hi:
            raise argparse.ArgumentTypeError(f"must be between {lo} and {hi}, got {value}")
        return value

    return parse


def _energy(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected kWh, got {text!r}") from None
    if not value >= 0 or value == float("inf"):
        raise argparse.ArgumentTypeError(f"must be a finite non-negative number, got {text!r}")
    return value


def _add_common(p, traces=True, tariff=True):
    if traces:
        p.add_argument("--traces", type=Path, required=True, help="long-format trace CSV")
    if tariff:
        p.add_argument("--tariff", type=Path, required=True, help="tariff JSON")
    p.add_argument("--format", choices=p2pio.FORMATS, default="json")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strict", action="store_true", default=True,
                      help="reject traces with gaps or missing readings (default)")
    mode.add_argument("--lenient", dest="strict", action="store_false",
                      help="zero-fill gaps and missing readings with a warning")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="p2pmarket", description="P2P prosumer energy trading simulator and stability auditor")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run the P2P scheme and the FiT baseline")
    _add_common(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("compare", help="savings of a stored P2P report over a stored FiT report")
    p.add_argument("--p2p", type=Path, required=True, help="json report written by simulate")
    p.add_argument("--fit", type=Path, required=True, help="json report written by simulate")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--format", choices=p2pio.FORMATS, default="json")

    p = sub.add_parser("quote", help="one-shot mid-market price quote")
    p.add_argument("--surplus", type=_energy, required=True, help="total surplus, kWh")
    p.add_argument("--deficit", type=_energy, required=True, help="total deficit, kWh")
    p.add_argument("--tariff", type=Path, help="tariff JSON (default: buy 24.6, sell 10 cents/kWh)")

    p = sub.add_parser("audit", help="per-slot superadditivity, core and balancedness checks")
    _add_common(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--max-super-n", type=_bounded_int(1, SUPERADDITIVITY_MAX_N), default=SUPERADDITIVITY_MAX_N)
    p.add_argument("--max-core-n", type=_bounded_int(1, CORE_MAX_N), default=CORE_MAX_N)
    p.add_argument("--max-lp-n", type=_bounded_int(1, BALANCEDNESS_MAX_N), default=BALANCEDNESS_MAX_N)
    p.add_argument("--trading-only", action="store_true", help="audit only slots with both sellers and buyers")
    p.add_argument("--fail-on-violation", action="store_true", help="exit 1 when any check fails")

    p = sub.add_parser("fixture", help="write the bundled synthetic trace set")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--sunless-days", type=_bounded_int(0, 365), default=0,
                   help="append this many zero-PV days")
    return parser


def _load_inputs(args):
    tariff = p2pio.load_tariff(args.tariff)
    traces = p2pio.load_traces(args.traces, slot_minutes=tariff.slot_minutes, strict=args.strict)
    return traces, tariff


def cmd_simulate(args, out):
    traces, tariff = _load_inputs(args)
    p2p, fit = run_p2p(traces, tariff), run_fit(traces, tariff)
    if not args.out.is_dir():
        raise ValidationError(f"output directory {args.out} does not exist")
    ext = args.format
    p2pio.write_all_atomic(
        {
            args.out / f"p2p_report.{ext}": p2pio.render_report(p2p, ext),
            args.out / f"fit_report.{ext}": p2pio.render_report(fit, ext),
            args.out / f"price_series.{ext}": p2pio.render_report(p2pio.price_series(p2p, tariff), ext),
        }
    )
    print(f"{len(traces)} slots, {len(traces.roster)} prosumers", file=out)
    for pid in p2p.roster:
        print(
            f"  {pid}: P2P {p2p.per_prosumer_total_cost[pid]:.2f} c, FiT {fit.per_prosumer_total_cost[pid]:.2f} c",
            file=out,
        )
    print(f"reports written to {args.out}", file=out)
    return EXIT_OK


def cmd_compare(args, out):
    p2p = p2pio.load_simulation_report(args.p2p)
    fit = p2pio.load_simulation_report(args.fit)
    savings = compare(p2p, fit)
    p2pio.emit_report(savings, args.format, args.out)
    for pid in savings.roster:
        print(
            f"  {pid}: saving {savings.per_prosumer_absolute_saving[pid]:.2f} c "
            f"({savings.per_prosumer_percent_saving[pid]:.2f}%)",
            file=out,
        )
    if not savings.never_detrimental:
        print("warning: P2P cost exceeds FiT cost for some prosumer/day", file=out)
    return EXIT_OK


def cmd_quote(args, out):
    tariff = p2pio.load_tariff(args.tariff) if args.tariff else TariffConfig(24.6, 10.0)
    q = quote_slot(SlotAggregates(args.surplus, args.deficit), tariff)
    out.write(
        p2pio.render_json(
            {
                "case": q.case.value,
                "mid_price": q.mid_price,
                "seller_price": q.seller_price,
                "buyer_price": q.buyer_price,
                "grid_sell_price": tariff.grid_sell_price,
                "grid_buy_price": tariff.grid_buy_price,
            }
        )
    )
    return EXIT_OK


def cmd_audit(args, out):
    traces, tariff = _load_inputs(args)
    caps = AuditCaps(args.max_super_n, args.max_core_n, args.max_lp_n)
    reports = run_stability_audit(traces, tariff, trading_slots_only if args.trading_only else None, caps)
    p2pio.emit_report(reports, args.format, args.out)
    flagged = [r for r in reports if r.has_violation]
    skipped = sum(bool(r.notices) for r in reports)
    print(f"audited {len(reports)} slots: {len(flagged)} with findings, {skipped} with skipped checks", file=out)
    for r in flagged:
        n_block = len(r.core.blocking) if r.core is not None else 0
        print(f"  {r.timestamp.isoformat()}: core_member={r.core_member} blocking_subsets={n_block}", file=out)
    if args.fail_on_violation and flagged:
        return EXIT_INVALID
    return EXIT_OK


def cmd_fixture(args, out):
    traces = fixture_traces(sunny_days=1, sunless_days=args.sunless_days)
    p2pio.write_atomic(args.out, p2pio.dump_traces(traces))
    print(f"wrote {len(traces)} slots x {len(traces.roster)} prosumers to {args.out}", file=out)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "quote": cmd_quote,
    "audit": cmd_audit,
    "fixture": cmd_fixture,
}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=err)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args, out)
    except ValidationError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=err)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
