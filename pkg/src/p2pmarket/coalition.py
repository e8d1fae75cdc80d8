"""Coalition value function and exhaustive stability checks.

Subsets are enumerated as bitmasks over the order in which prosumer states
are supplied, so results (and the order of reported violations) are fully
deterministic. Each prosumer brings the same surplus or deficit to every
coalition it could join; only the netting against the grid changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import lp_solver
from .energy_model import ENERGY_TOL, MONEY_TOL, ProsumerSlotState, TariffConfig, check_unique_ids
from .errors import CapExceededError, SolverError, ValidationError

# Hard ceilings on exhaustive enumeration; callers may ask for less, never more.
SUPERADDITIVITY_MAX_N = 10
CORE_MAX_N = 20
BALANCEDNESS_MAX_N = 10


def value_of_net(z, tariff: TariffConfig):
    """Worth of a coalition whose members net to ``z`` kWh (positive = exporting)."""
    z = np.asarray(z, dtype=float)
    out = tariff.grid_sell_price * np.maximum(0.0, z) - tariff.grid_buy_price * np.maximum(0.0, -z)
    return float(out) if out.ndim == 0 else out


def _ids(states: Sequence[ProsumerSlotState]) -> Tuple:
    check_unique_ids(states)
    return tuple(s.prosumer_id for s in states)


def coalition_value(subset: Iterable, states: Sequence[ProsumerSlotState], tariff: TariffConfig) -> float:
    by_id = {s.prosumer_id: s for s in states}
    if len(by_id) != len(states):
        check_unique_ids(states)
    members = set(subset)
    unknown = members - by_id.keys()
    if unknown:
        raise ValidationError(f"unknown prosumer id(s) in subset: {sorted(map(repr, unknown))}")
    z = math.fsum(by_id[i].net for i in members)
    return value_of_net(z, tariff)


def grand_value(states: Sequence[ProsumerSlotState], tariff: TariffConfig) -> float:
    return value_of_net(math.fsum(s.net for s in states), tariff)


def _subset_sums(values: np.ndarray) -> np.ndarray:
    """Sum of ``values`` over every subset, indexed by bitmask."""
    out = np.zeros(1 << values.size)
    for i, v in enumerate(values):
        size = 1 << i
        out[size : 2 * size] = out[:size] + v
    return out


def _members(mask: int, ids: Tuple) -> Tuple:
    return tuple(ids[i] for i in range(len(ids)) if mask >> i & 1)


def _check_cap(check: str, n: int, max_n: int, hard: int) -> None:
    if max_n > hard:
        raise ValidationError(f"{check}: max_n={max_n} is above the hard limit of {hard}")
    if n > max_n:
        raise CapExceededError(check, n, max_n)


# -- superadditivity -----------------------------------------------------------


@dataclass(frozen=True)
class SuperadditivityViolation:
    first: Tuple
    second: Tuple
    union_value: float
    sum_value: float


@dataclass
class SuperadditivityResult:
    superadditive: bool
    pairs_checked: int
    violations: List[SuperadditivityViolation] = field(default_factory=list)


@lru_cache(maxsize=None)
def _disjoint_pairs(n: int):
    """Bitmask pairs (A, B), A and B disjoint and nonempty, each unordered pair once."""
    if n < 2:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    codes = np.arange(3**n, dtype=np.int64)
    a = np.zeros_like(codes)
    b = np.zeros_like(codes)
    rest = codes.copy()
    for i in range(n):
        digit = rest % 3
        rest //= 3
        a |= (digit == 1).astype(np.int64) << i
        b |= (digit == 2).astype(np.int64) << i
    keep = (a > 0) & (b > 0) & (a < b)
    a, b = a[keep], b[keep]
    order = np.lexsort((a, a | b))
    return a[order], b[order]


def check_superadditivity(
    states: Sequence[ProsumerSlotState],
    tariff: TariffConfig,
    max_n: int = SUPERADDITIVITY_MAX_N,
    tol: float = MONEY_TOL,
) -> SuperadditivityResult:
    """Check v(A | B) >= v(A) + v(B) for every disjoint pair of nonempty coalitions."""
    ids = _ids(states)
    _check_cap("superadditivity", len(ids), max_n, SUPERADDITIVITY_MAX_N)
    a, b = _disjoint_pairs(len(ids))
    values = value_of_net(_subset_sums(np.array([s.net for s in states])), tariff)
    union = values[a | b]
    split = values[a] + values[b]
    bad = np.nonzero(union < split - tol)[0]
    violations = [
        SuperadditivityViolation(
            _members(int(a[k]), ids), _members(int(b[k]), ids), float(union[k]), float(split[k])
        )
        for k in bad
    ]
    return SuperadditivityResult(not violations, int(a.size), violations)


# -- core ----------------------------------------------------------------------


@dataclass(frozen=True)
class BlockingSubset:
    members: Tuple
    payoff_sum: float
    value: float

    @property
    def slack(self) -> float:
        return self.payoff_sum - self.value


@dataclass
class CoreResult:
    core_member: bool
    efficient: bool
    payoff_total: float
    grand_value: float
    subsets_checked: int
    blocking: List[BlockingSubset] = field(default_factory=list)


def allocation_payoffs(partition, quote, states: Sequence[ProsumerSlotState]) -> Dict:
    """Sellers earn the quoted seller price on their surplus; buyers pay the buyer price on their deficit."""
    payoffs = {}
    for s in states:
        if s.prosumer_id in partition.sellers:
            payoffs[s.prosumer_id] = quote.seller_price * s.surplus
        elif s.prosumer_id in partition.buyers:
            payoffs[s.prosumer_id] = -quote.buyer_price * s.deficit
        else:
            payoffs[s.prosumer_id] = 0.0
    return payoffs


def check_core_membership(
    payoffs: Mapping,
    states: Sequence[ProsumerSlotState],
    tariff: TariffConfig,
    max_n: int = CORE_MAX_N,
    tol: float = MONEY_TOL,
) -> CoreResult:
    """Test efficiency and coalition rationality of ``payoffs`` over all 2^N - 1 coalitions."""
    ids = _ids(states)
    if set(payoffs) != set(ids) or len(payoffs) != len(ids):
        raise ValidationError("payoff vector must be keyed by exactly the slot's prosumers")
    _check_cap("core membership", len(ids), max_n, CORE_MAX_N)
    e = np.array([float(payoffs[i]) for i in ids])
    pay_sums = _subset_sums(e)
    values = value_of_net(_subset_sums(np.array([s.net for s in states])), tariff)
    total = math.fsum(e)
    v_grand = grand_value(states, tariff)
    efficient = abs(total - v_grand) <= tol
    bad = np.nonzero(pay_sums[1:] < values[1:] - tol)[0] + 1
    blocking = [
        BlockingSubset(_members(int(m), ids), float(pay_sums[m]), float(values[m])) for m in bad
    ]
    return CoreResult(
        core_member=efficient and not blocking,
        efficient=efficient,
        payoff_total=total,
        grand_value=v_grand,
        subsets_checked=(1 << len(ids)) - 1,
        blocking=blocking,
    )


def build_core_witness(states: Sequence[ProsumerSlotState], tariff: TariffConfig) -> Dict:
    """A core allocation that pays every prosumer one common price on its net position.

    The price is the feed-in tariff when the slot exports, the grid price when
    it imports, and the midpoint when it nets to zero; any coalition then gets
    at least what it could secure alone.
    """
    _ids(states)
    if len(states) == 1:
        return {states[0].prosumer_id: grand_value(states, tariff)}
    z = math.fsum(s.net for s in states)
    if z > ENERGY_TOL:
        lam = tariff.grid_sell_price
    elif z < -ENERGY_TOL:
        lam = tariff.grid_buy_price
    else:
        lam = (tariff.grid_sell_price + tariff.grid_buy_price) / 2.0
    return {s.prosumer_id: lam * s.net for s in states}


# -- balancedness ----------------------------------------------------------------


@dataclass
class BalancednessResult:
    balanced: bool
    optimum: float
    grand_value: float
    dual_optimum: Optional[float] = None
    weights: Dict[Tuple, float] = field(default_factory=dict)


def _membership_matrix(n: int) -> np.ndarray:
    masks = np.arange(1, 1 << n)
    return ((masks[None, :] >> np.arange(n)[:, None]) & 1).astype(float)


def balancing_program(states: Sequence[ProsumerSlotState], tariff: TariffConfig) -> lp_solver.LinearProgram:
    """max sum_S f(S) v(S) over balancing weights: every prosumer's coalitions weigh 1 in total.

    Columns are the nonempty coalitions in bitmask order.
    """
    n = len(states)
    values = value_of_net(_subset_sums(np.array([s.net for s in states])), tariff)[1:]
    return lp_solver.LinearProgram(
        objective=values,
        constraint_matrix=_membership_matrix(n),
        rhs=np.ones(n),
        row_kinds=[lp_solver.RowKind.EQ] * n,
        variable_bounds=[(0.0, 1.0)] * values.size,
        sense=lp_solver.Sense.MAXIMIZE,
    )


def core_program(states: Sequence[ProsumerSlotState], tariff: TariffConfig) -> lp_solver.LinearProgram:
    """min sum_n e_n subject to e(S) >= v(S) for every nonempty coalition, e free."""
    n = len(states)
    values = value_of_net(_subset_sums(np.array([s.net for s in states])), tariff)[1:]
    return lp_solver.LinearProgram(
        objective=np.ones(n),
        constraint_matrix=_membership_matrix(n).T,
        rhs=values,
        row_kinds=[lp_solver.RowKind.GE] * values.size,
        variable_bounds=[(None, None)] * n,
        sense=lp_solver.Sense.MINIMIZE,
    )


def check_balancedness(
    states: Sequence[ProsumerSlotState],
    tariff: TariffConfig,
    max_n: int = BALANCEDNESS_MAX_N,
    tol: float = MONEY_TOL,
    with_dual: bool = False,
) -> BalancednessResult:
    """Solve the balancing-weights LP; the core is nonempty iff its optimum is at most v(N)."""
    ids = _ids(states)
    _check_cap("balancedness", len(ids), max_n, BALANCEDNESS_MAX_N)
    v_grand = grand_value(states, tariff)
    sol = lp_solver.solve(balancing_program(states, tariff))
    if not sol.optimal:
        # singleton weights are always feasible and the region is bounded
        raise SolverError(f"balancing LP returned status {sol.status.value}")
    weights = {
        _members(m + 1, ids): float(w) for m, w in enumerate(sol.primal_values) if w > 1e-12
    }
    dual = None
    if with_dual:
        dsol = lp_solver.solve(core_program(states, tariff))
        if not dsol.optimal:
            raise SolverError(f"core LP returned status {dsol.status.value}")
        dual = dsol.objective_value
    return BalancednessResult(
        balanced=sol.objective_value <= v_grand + tol,
        optimum=sol.objective_value,
        grand_value=v_grand,
        dual_optimum=dual,
        weights=weights,
    )


# -- combined report -------------------------------------------------------------


@dataclass
class AuditCaps:
    superadditivity: int = SUPERADDITIVITY_MAX_N
    core: int = CORE_MAX_N
    balancedness: int = BALANCEDNESS_MAX_N


@dataclass
class StabilityReport:
    n_prosumers: int
    witness_allocation: Dict
    superadditivity: Optional[SuperadditivityResult] = None
    core: Optional[CoreResult] = None
    witness_core: Optional[CoreResult] = None
    balancedness: Optional[BalancednessResult] = None
    timestamp: object = None
    notices: List[str] = field(default_factory=list)

    @property
    def superadditive(self) -> Optional[bool]:
        return None if self.superadditivity is None else self.superadditivity.superadditive

    @property
    def core_member(self) -> Optional[bool]:
        return None if self.core is None else self.core.core_member

    @property
    def balanced(self) -> Optional[bool]:
        return None if self.balancedness is None else self.balancedness.balanced

    @property
    def has_violation(self) -> bool:
        return any(
            flag is False
            for flag in (
                self.superadditive,
                self.core_member,
                self.balanced,
                None if self.witness_core is None else self.witness_core.core_member,
            )
        )


def stability_report(
    states: Sequence[ProsumerSlotState],
    tariff: TariffConfig,
    payoffs: Optional[Mapping] = None,
    caps: AuditCaps = AuditCaps(),
    timestamp=None,
) -> StabilityReport:
    """Run every check that fits under ``caps``; skipped checks leave a notice instead."""
    witness = build_core_witness(states, tariff)
    report = StabilityReport(len(states), witness, timestamp=timestamp)
    checks = [
        ("superadditivity", lambda: check_superadditivity(states, tariff, caps.superadditivity)),
        ("witness_core", lambda: check_core_membership(witness, states, tariff, caps.core)),
        ("balancedness", lambda: check_balancedness(states, tariff, caps.balancedness)),
    ]
    if payoffs is not None:
        checks.insert(1, ("core", lambda: check_core_membership(payoffs, states, tariff, caps.core)))
    for name, run in checks:
        try:
            setattr(report, name, run())
        except CapExceededError as exc:
            report.notices.append(f"{name} skipped: {exc}")
    return report
