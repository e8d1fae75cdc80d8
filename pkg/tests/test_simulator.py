from datetime import date, datetime, timedelta

import pytest

from p2pmarket.coalition import AuditCaps
from p2pmarket.errors import ValidationError
from p2pmarket.simulator import (
    Reading,
    Slot,
    TraceSet,
    compare,
    run_fit,
    run_p2p,
    run_stability_audit,
    trading_slots_only,
    worker_count,
)
from p2pmarket.synthetic import fixture_traces

T0 = datetime(2024, 1, 1, 12, 0)


def traces_of(*slots, minutes=15):
    return TraceSet(
        [Slot(T0 + timedelta(minutes=minutes * k), {pid: Reading(*r) for pid, r in s.items()}) for k, s in enumerate(slots)],
        minutes,
    )


def test_single_slot_p2p_vs_fit(paper_tariff):
    tr = traces_of({"s": (0, 5), "b": (5, 0)})
    p2p, fit = run_p2p(tr, paper_tariff), run_fit(tr, paper_tariff)
    assert p2p.per_prosumer_total_cost["b"] == pytest.approx(86.5)
    assert fit.per_prosumer_total_cost["b"] == pytest.approx(123.0)
    assert p2p.per_prosumer_total_cost["s"] == pytest.approx(-86.5)
    assert fit.per_prosumer_total_cost["s"] == pytest.approx(-50.0)


def test_fit_costs(paper_tariff):
    tr = traces_of({"s": (0, 5), "b": (2, 0), "n": (1, 1)})
    fit = run_fit(tr, paper_tariff)
    assert fit.per_prosumer_total_cost == pytest.approx({"s": -50.0, "b": 49.2, "n": 0.0})


def test_night_trace_identical(paper_tariff):
    tr = traces_of(*[{"a": (0.3 + k / 10, 0), "b": (0.7, 0), "c": (0, 0)} for k in range(8)])
    p2p, fit = run_p2p(tr, paper_tariff), run_fit(tr, paper_tariff)
    assert [r.costs for r in p2p.records] == [r.costs for r in fit.records]
    assert p2p.per_prosumer_total_cost == fit.per_prosumer_total_cost
    assert p2p.per_day_cost == fit.per_day_cost


def test_empty_trace(paper_tariff):
    tr = TraceSet([])
    rep = run_p2p(tr, paper_tariff)
    assert rep.records == [] and rep.per_prosumer_total_cost == {}
    s = compare(rep, run_fit(tr, paper_tariff))
    assert s.per_prosumer_absolute_saving == {}


def test_totals_equal_sum_of_slots(paper_tariff):
    tr = fixture_traces()
    for rep in (run_p2p(tr, paper_tariff), run_fit(tr, paper_tariff)):
        for pid in tr.roster:
            assert rep.per_prosumer_total_cost[pid] == pytest.approx(
                sum(r.costs[pid] for r in rep.records), abs=1e-4
            )


def test_compare_identity_and_zero_sun(paper_tariff):
    tr = fixture_traces(sunny_days=1, sunless_days=1)
    p2p, fit = run_p2p(tr, paper_tariff), run_fit(tr, paper_tariff)
    same = compare(fit, fit)
    assert set(same.per_prosumer_absolute_saving.values()) == {0.0}
    s = compare(p2p, fit)
    sunless = date(2013, 12, 3)
    assert all(s.per_day_saving[(pid, sunless)] == 0.0 for pid in tr.roster)
    assert s.never_detrimental
    for pid in tr.roster:
        assert s.per_prosumer_absolute_saving[pid] == s.fit_total_cost[pid] - s.p2p_total_cost[pid]


def test_compare_mismatch(paper_tariff):
    a = run_fit(traces_of({"a": (1, 0)}), paper_tariff)
    b = run_fit(traces_of({"b": (1, 0)}), paper_tariff)
    with pytest.raises(ValidationError, match="different prosumers"):
        compare(a, b)
    c = run_fit(traces_of({"a": (1, 0)}, {"a": (1, 0)}), paper_tariff)
    with pytest.raises(ValidationError, match="slot ranges"):
        compare(a, c)


def test_traceset_validation():
    with pytest.raises(ValidationError, match="not 15 minutes apart"):
        TraceSet([Slot(T0, {"a": Reading(0, 0)}), Slot(T0 + timedelta(minutes=30), {"a": Reading(0, 0)})])
    with pytest.raises(ValidationError, match="roster"):
        TraceSet([Slot(T0, {"a": Reading(0, 0)}), Slot(T0 + timedelta(minutes=15), {"b": Reading(0, 0)})])


def test_validation_errors_carry_timestamp(paper_tariff):
    tr = traces_of({"a": (-1.0, 0)})
    with pytest.raises(ValidationError, match=T0.isoformat()):
        run_p2p(tr, paper_tariff)


def test_additivity(paper_tariff):
    first = fixture_traces(sunny_days=1)
    second = TraceSet([Slot(s.timestamp + timedelta(days=1), s.readings) for s in fixture_traces(sunny_days=1).slots])
    joined = first.concatenate(second)
    whole = run_p2p(joined, paper_tariff)
    a, b = run_p2p(first, paper_tariff), run_p2p(second, paper_tariff)
    for pid in joined.roster:
        assert whole.per_prosumer_total_cost[pid] == pytest.approx(
            a.per_prosumer_total_cost[pid] + b.per_prosumer_total_cost[pid], abs=1e-9
        )


def test_worker_count_independent(paper_tariff, monkeypatch):
    tr = fixture_traces()
    monkeypatch.setenv("P2PMARKET_THREADS", "1")
    serial = run_p2p(tr, paper_tariff)
    monkeypatch.setenv("P2PMARKET_THREADS", "4")
    parallel = run_p2p(tr, paper_tariff)
    assert serial == parallel
    monkeypatch.setenv("P2PMARKET_THREADS", "lots")
    with pytest.raises(ValidationError):
        worker_count()


def test_timezone_changes_day_boundaries(paper_tariff):
    from p2pmarket.energy_model import TariffConfig
    from datetime import timezone

    tr = TraceSet(
        [Slot(datetime(2024, 1, 1, 23, 45, tzinfo=timezone.utc) + timedelta(minutes=15 * k), {"a": Reading(1, 0)}) for k in range(2)]
    )
    utc = run_fit(tr, paper_tariff)
    assert len(utc.per_day_cost) == 2
    sydney = run_fit(tr, TariffConfig(24.6, 10, timezone="Australia/Sydney"))
    assert list(sydney.per_day_cost) == [("a", date(2024, 1, 2))]


def test_audit_cases(paper_tariff):
    tr = traces_of(
        {"s1": (0, 3), "s2": (0, 2), "b": (5, 0)},  # balanced
        {"s1": (1, 0), "s2": (1, 0), "b": (5, 0)},  # sunless
        {"s1": (0, 90), "s2": (0, 10), "b": (10, 0)},  # surplus-heavy counterexample
    )
    case1, dark, case2 = run_stability_audit(tr, paper_tariff)
    assert case1.superadditive and case1.core_member and case1.balanced and case1.witness_core.core_member
    assert dark.superadditive and dark.core_member and dark.balanced
    assert case2.core_member is False and case2.balanced and case2.superadditive
    assert [r.timestamp for r in (case1, dark, case2)] == [s.timestamp for s in tr.slots]
    only = run_stability_audit(tr, paper_tariff, trading_slots_only)
    assert len(only) == 2


def test_audit_caps_per_slot(paper_tariff):
    big = {f"p{i}": ((i % 3) * 0.5, (i % 4) * 0.4) for i in range(15)}
    small = {f"p{i}": (0.1, 0) for i in range(15)}
    tr = traces_of(big, small)
    reports = run_stability_audit(tr, paper_tariff, caps=AuditCaps())
    for r in reports:
        assert r.balancedness is None and r.core is not None
        assert any("balancedness" in n for n in r.notices)
