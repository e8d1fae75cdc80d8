"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Small and dependency-free apart from numpy. Problems are converted to the
standard form ``min c.x  s.t.  A x = b, x >= 0, b >= 0`` before pivoting, and
every "optimal" answer is re-checked against the original constraints.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import SolverError, ValidationError

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-8


class RowKind(str, enum.Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class Sense(str, enum.Enum):
    MAXIMIZE = "maximize"
    MINIMIZE = "minimize"


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    STALLED = "stalled"


@dataclass
class LinearProgram:
    objective: np.ndarray
    constraint_matrix: np.ndarray
    rhs: np.ndarray
    row_kinds: Sequence[RowKind]
    variable_bounds: Sequence[tuple] | None = None
    sense: Sense = Sense.MAXIMIZE

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).reshape(-1)
        n = self.objective.size
        A = np.asarray(self.constraint_matrix, dtype=float)
        if A.size == 0:
            A = A.reshape(0, n)
        if A.ndim != 2:
            raise ValidationError("constraint_matrix must be two-dimensional")
        self.constraint_matrix = A
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        m = A.shape[0]
        if A.shape[1] != n:
            raise ValidationError(
                f"constraint_matrix has {A.shape[1]} columns but objective has {n} entries"
            )
        if self.rhs.size != m:
            raise ValidationError(f"rhs has {self.rhs.size} entries for {m} rows")
        if len(self.row_kinds) != m:
            raise ValidationError(f"row_kinds has {len(self.row_kinds)} entries for {m} rows")
        self.row_kinds = [RowKind(k) for k in self.row_kinds]
        self.sense = Sense(self.sense)
        if self.variable_bounds is None:
            self.variable_bounds = [(0.0, np.inf)] * n
        if len(self.variable_bounds) != n:
            raise ValidationError(
                f"variable_bounds has {len(self.variable_bounds)} entries for {n} variables"
            )
        bounds = []
        for j, (lo, hi) in enumerate(self.variable_bounds):
            lo = -np.inf if lo is None else float(lo)
            hi = np.inf if hi is None else float(hi)
            if np.isnan(lo) or np.isnan(hi) or lo == np.inf or hi == -np.inf or lo > hi:
                raise ValidationError(f"invalid bounds ({lo}, {hi}) for variable {j}")
            bounds.append((lo, hi))
        self.variable_bounds = bounds
        for name, arr in (("objective", self.objective), ("constraint_matrix", A), ("rhs", self.rhs)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains non-finite entries")

    @property
    def shape(self):
        return self.constraint_matrix.shape


@dataclass
class LpSolution:
    status: Status
    primal_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective_value: float = float("nan")
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class _Stalled(Exception):
    pass


class _Tableau:
    """Minimisation tableau; the last row holds reduced costs, the last column the rhs."""

    def __init__(self, A, b, basis, max_iter):
        m, n = A.shape
        self.T = np.zeros((m + 1, n + 1))
        self.T[:m, :n] = A
        self.T[:m, n] = b
        self.basis = list(basis)
        self.m, self.n = m, n
        self.iterations = 0
        self.max_iter = max_iter

    def set_objective(self, c):
        self.T[-1, : self.n] = c
        self.T[-1, self.n] = 0.0
        for i, j in enumerate(self.basis):
            if self.T[-1, j] != 0.0:
                self.T[-1, :] -= self.T[-1, j] * self.T[i, :]

    def pivot(self, r, c):
        T = self.T
        T[r, :] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        nz = np.nonzero(col)[0]
        if nz.size:
            T[nz, :] -= np.outer(col[nz], T[r, :])
        T[:, c] = 0.0
        T[r, c] = 1.0
        self.basis[r] = c

    def run(self, allowed):
        """Bland's rule: lowest-index improving column, lowest-index leaving variable on ties.

        Returns True at optimality, False if unbounded.
        """
        T = self.T
        while True:
            reduced = T[-1, : self.n]
            cand = np.nonzero((reduced < -PIVOT_TOL) & allowed)[0]
            if cand.size == 0:
                return True
            if self.iterations >= self.max_iter:
                raise _Stalled
            c = int(cand[0])
            col = T[: self.m, c]
            pos = np.nonzero(col > PIVOT_TOL)[0]
            if pos.size == 0:
                return False
            ratios = T[pos, -1] / col[pos]
            best = ratios.min()
            ties = pos[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
            r = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(r, c)
            self.iterations += 1


def _standard_form(lp: LinearProgram):
    """Map the LP onto ``min c.y, A y = b, y >= 0`` and return a recovery map.

    Each original variable becomes ``x = offset + sum(coef * y[col])``.
    """
    A0, b0 = lp.constraint_matrix, lp.rhs.copy()
    m0, n0 = A0.shape
    c0 = lp.objective if lp.sense is Sense.MINIMIZE else -lp.objective

    cols, costs, recover = [], [], []
    extra_rows = []  # (column index in y, upper bound)
    for j, (lo, hi) in enumerate(lp.variable_bounds):
        a = A0[:, j]
        if np.isfinite(lo):
            b0 -= a * lo
            k = len(cols)
            cols.append(a)
            costs.append(c0[j])
            recover.append((lo, [(k, 1.0)]))
            if np.isfinite(hi):
                extra_rows.append((k, hi - lo))
        elif np.isfinite(hi):
            b0 -= a * hi
            k = len(cols)
            cols.append(-a)
            costs.append(-c0[j])
            recover.append((hi, [(k, -1.0)]))
        else:
            k = len(cols)
            cols.extend([a, -a])
            costs.extend([c0[j], -c0[j]])
            recover.append((0.0, [(k, 1.0), (k + 1, -1.0)]))

    ny = len(cols)
    Ay = np.column_stack(cols) if cols else np.zeros((m0, 0))
    kinds = list(lp.row_kinds)
    if extra_rows:
        U = np.zeros((len(extra_rows), ny))
        for i, (k, _) in enumerate(extra_rows):
            U[i, k] = 1.0
        Ay = np.vstack([Ay, U])
        b0 = np.concatenate([b0, [u for _, u in extra_rows]])
        kinds += [RowKind.LE] * len(extra_rows)

    m = Ay.shape[0]
    n_slack = sum(k is not RowKind.EQ for k in kinds)
    A = np.zeros((m, ny + n_slack))
    A[:, :ny] = Ay
    slack_of_row = {}
    s = ny
    for i, k in enumerate(kinds):
        if k is RowKind.LE:
            A[i, s] = 1.0
        elif k is RowKind.GE:
            A[i, s] = -1.0
        else:
            continue
        slack_of_row[i] = s
        s += 1
    b = b0.copy()
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    c = np.concatenate([np.asarray(costs, dtype=float), np.zeros(n_slack)])
    return A, b, c, slack_of_row, recover


def _recover(lp, y, recover):
    x = np.empty(lp.objective.size)
    for j, (offset, terms) in enumerate(recover):
        x[j] = offset + sum(coef * y[k] for k, coef in terms)
    return x


def _verify(lp: LinearProgram, x: np.ndarray) -> None:
    A, b = lp.constraint_matrix, lp.rhs
    lhs = A @ x
    scale = 1.0 + np.abs(b) + np.abs(A) @ np.abs(x)
    tol = FEAS_TOL * scale
    for i, kind in enumerate(lp.row_kinds):
        d = lhs[i] - b[i]
        bad = (
            (kind is RowKind.LE and d > tol[i])
            or (kind is RowKind.GE and d < -tol[i])
            or (kind is RowKind.EQ and abs(d) > tol[i])
        )
        if bad:
            raise SolverError(f"row {i} violated by {d:.3e} at reported optimum")
    for j, (lo, hi) in enumerate(lp.variable_bounds):
        t = FEAS_TOL * (1.0 + abs(x[j]))
        if x[j] < lo - t or x[j] > hi + t:
            raise SolverError(f"variable {j}={x[j]!r} outside bounds [{lo}, {hi}]")


def solve(lp: LinearProgram) -> LpSolution:
    """Solve ``lp`` exactly enough for desk-scale problems.

    Never returns a wrong "optimal": the point is checked against every
    original constraint and bound, and an inconsistency raises
    :class:`SolverError`. Exceeding ``50 * (rows + columns)`` pivots yields
    ``Status.STALLED``.
    """
    A, b, c, slack_of_row, recover = _standard_form(lp)
    m, n = A.shape
    max_iter = 50 * (lp.shape[0] + lp.shape[1])

    # rows whose slack can start in the basis need no artificial
    basis, art_rows = [], []
    for i in range(m):
        s = slack_of_row.get(i)
        if s is not None and A[i, s] == 1.0:
            basis.append(s)
        else:
            basis.append(-1)
            art_rows.append(i)
    n_art = len(art_rows)
    A_full = np.hstack([A, np.zeros((m, n_art))])
    for k, i in enumerate(art_rows):
        A_full[i, n + k] = 1.0
        basis[i] = n + k

    tab = _Tableau(A_full, b, basis, max_iter)
    try:
        if n_art:
            phase1 = np.concatenate([np.zeros(n), np.ones(n_art)])
            tab.set_objective(phase1)
            tab.run(np.ones(n + n_art, dtype=bool))
            infeas = -tab.T[-1, -1]
            if infeas > FEAS_TOL * (1.0 + np.abs(b).sum()):
                return LpSolution(Status.INFEASIBLE, iterations=tab.iterations)
            # drive remaining artificials out; rows where that fails are redundant
            drop = []
            for r in range(m):
                if tab.basis[r] >= n:
                    row = tab.T[r, :n]
                    nz = np.nonzero(np.abs(row) > PIVOT_TOL)[0]
                    if nz.size:
                        tab.pivot(r, int(nz[0]))
                    else:
                        drop.append(r)
            if drop:
                keep = [r for r in range(m) if r not in drop]
                tab.T = np.vstack([tab.T[keep], tab.T[-1:]])
                tab.basis = [tab.basis[r] for r in keep]
                tab.m = len(keep)
        allowed = np.zeros(n + n_art, dtype=bool)
        allowed[:n] = True
        tab.set_objective(np.concatenate([c, np.zeros(n_art)]))
        bounded = tab.run(allowed)
    except _Stalled:
        return LpSolution(Status.STALLED, iterations=tab.iterations)
    if not bounded:
        return LpSolution(Status.UNBOUNDED, iterations=tab.iterations)

    y = np.zeros(n + n_art)
    for r, j in enumerate(tab.basis):
        y[j] = tab.T[r, -1]
    y = np.maximum(y[:n], 0.0)
    x = _recover(lp, y, recover)
    _verify(lp, x)
    return LpSolution(Status.OPTIMAL, x, float(lp.objective @ x), tab.iterations)
