import pytest

from p2pmarket.energy_model import TariffConfig, compute_slot_state

_criteria = {}


@pytest.fixture
def paper_tariff():
    return TariffConfig(grid_buy_price=24.6, grid_sell_price=10.0)


@pytest.fixture
def three_prosumers():
    """Two sellers (90 and 10 kWh surplus) and one buyer (10 kWh deficit)."""
    return [
        compute_slot_state("s1", 0.0, 90.0),
        compute_slot_state("s2", 0.0, 10.0),
        compute_slot_state("b", 10.0, 0.0),
    ]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    label = marker.args[0]
    if rep.failed:
        _criteria[label] = "FAIL"
    elif rep.when == "call" and rep.passed:
        _criteria.setdefault(label, "PASS")
    elif rep.skipped:
        _criteria.setdefault(label, "SKIP")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_criteria, key=lambda s: int(s.split(".")[0])):
        terminalreporter.write_line(f"[{_criteria[label]}] {label}")
