"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Solves ``min c.v + c0  s.t.  A_ub v <= b_ub,  A_eq v = b_eq,  lb <= v <= ub``
with finite lower bounds (upper bounds may be infinite).  The problem is moved
to standard form by shifting every variable to its lower bound and turning
finite upper bounds into ``<=`` rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PIVOT_TOL = 1e-7
COST_TOL = 1e-9
FEAS_TOL = 1e-7
MAX_PIVOTS = 200_000


class SimplexError(RuntimeError):
    pass


@dataclass
class StandardForm:
    """``A y = b, y >= 0`` with ``y = [v - lb, slacks]``.

    ``slack_rows[k]`` gives, for slack column ``n + k``, the original ``<=`` row
    as ``(coeffs over v, rhs)`` so that ``slack = rhs - coeffs . v``.
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    n_struct: int
    lb: np.ndarray
    slack_rows: list = field(default_factory=list)

    @property
    def n_cols(self) -> int:
        return self.A.shape[1]


@dataclass
class SimplexResult:
    status: str
    objective: float
    v: np.ndarray | None
    basis: list
    std: StandardForm
    pivots: int = 0

    def tableau(self) -> tuple[np.ndarray, np.ndarray]:
        """Rows ``B^-1 A`` and ``B^-1 b`` for the final basis."""
        B = self.std.A[:, self.basis]
        return np.linalg.solve(B, self.std.A), np.linalg.solve(B, self.std.b)


def to_standard_form(c, A_ub, b_ub, A_eq, b_eq, lb, ub) -> StandardForm:
    n = len(c)
    lb = np.asarray(lb, dtype=np.float64)
    ub = np.asarray(ub, dtype=np.float64)
    if not np.all(np.isfinite(lb)) or np.any(np.isnan(ub)) or np.any(ub < lb):
        raise SimplexError("lower bounds must be finite and not above upper bounds")
    A_ub = np.asarray(A_ub, dtype=np.float64).reshape(-1, n)
    A_eq = np.asarray(A_eq, dtype=np.float64).reshape(-1, n)
    b_ub = np.asarray(b_ub, dtype=np.float64).reshape(-1)
    b_eq = np.asarray(b_eq, dtype=np.float64).reshape(-1)

    span = ub - lb
    bounded = np.flatnonzero(span < np.inf)
    ub_rows = np.zeros((bounded.size, n))
    ub_rows[np.arange(bounded.size), bounded] = 1.0
    rows_le = np.vstack([A_ub, ub_rows])
    rhs_le = np.concatenate([b_ub, ub[bounded]])
    m_le, m_eq = rows_le.shape[0], A_eq.shape[0]

    A = np.zeros((m_le + m_eq, n + m_le))
    A[:m_le, :n] = rows_le
    A[:m_le, n:] = np.eye(m_le)
    A[m_le:, :n] = A_eq
    b = np.concatenate([rhs_le - rows_le @ lb, b_eq - A_eq @ lb])
    slack_rows = [(rows_le[k], rhs_le[k]) for k in range(m_le)]
    return StandardForm(A, b, np.concatenate([np.asarray(c, float), np.zeros(m_le)]), n, lb, slack_rows)


def _pivot(T, basis, r, col):
    T[r] /= T[r, col]
    factor = T[:, col].copy()
    factor[r] = 0.0
    T -= np.outer(factor, T[r])
    basis[r] = col


def _run(T, cost, basis, allowed, pivots):
    """Bland's rule on tableau ``T`` (last column rhs) with reduced-cost row ``cost``."""
    m = T.shape[0]
    while True:
        cand = np.flatnonzero((cost[:-1] < -COST_TOL) & allowed)
        if cand.size == 0:
            return pivots
        col = cand[0]
        colv = T[:, col]
        pos = colv > PIVOT_TOL
        if not np.any(pos):
            raise SimplexError("problem is unbounded")
        ratios = np.full(m, np.inf)
        ratios[pos] = T[pos, -1] / colv[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, abs(best)))
        r = min(ties, key=lambda i: basis[i])
        cost -= cost[col] * T[r] / T[r, col]
        _pivot(T, basis, r, col)
        pivots += 1
        if pivots > MAX_PIVOTS:
            raise SimplexError("pivot limit exceeded")


def solve_standard(std: StandardForm, c0: float = 0.0) -> SimplexResult:
    A, b = std.A.copy(), std.b.copy()
    m, ncols = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    # initial basis: slack columns with +1 where possible, artificials elsewhere
    basis = [-1] * m
    n = std.n_struct
    for k in range(ncols - n):
        r = k
        if r < m and not neg[r]:
            basis[r] = n + k
    art_rows = [r for r in range(m) if basis[r] < 0]
    n_art = len(art_rows)
    T = np.zeros((m, ncols + n_art + 1))
    T[:, :ncols] = A
    T[:, -1] = b
    for a, r in enumerate(art_rows):
        T[r, ncols + a] = 1.0
        basis[r] = ncols + a

    pivots = 0
    allowed = np.ones(ncols + n_art, dtype=bool)
    if n_art:
        cost = np.zeros(ncols + n_art + 1)
        cost[ncols:ncols + n_art] = 1.0
        for r in art_rows:
            cost -= T[r]
        pivots = _run(T, cost, basis, allowed, pivots)
        if -cost[-1] > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
            return SimplexResult("infeasible", np.inf, None, [], std, pivots)
        # drive remaining artificials out of the basis, dropping redundant rows
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] >= ncols:
                row = T[r, :ncols]
                k = int(np.argmax(np.abs(row)))
                if abs(row[k]) > PIVOT_TOL:
                    _pivot(T, basis, r, k)
                    pivots += 1
                else:
                    keep[r] = False
        T = T[keep][:, list(range(ncols)) + [T.shape[1] - 1]]
        basis = [bi for bi, k in zip(basis, keep) if k]
        if not keep.all():
            std = StandardForm(std.A[keep], std.b[keep], std.c, std.n_struct, std.lb, std.slack_rows)
        allowed = np.ones(ncols, dtype=bool)

    cost = np.concatenate([std.c, [0.0]])
    for r, bi in enumerate(basis):
        if cost[bi] != 0.0:
            cost -= cost[bi] * T[r]
    pivots = _run(T, cost, basis, allowed, pivots)

    # recompute the vertex from the basis for accuracy
    y = np.zeros(ncols)
    y[basis] = np.linalg.solve(std.A[:, basis], std.b)
    v = y[:n] + std.lb
    obj = float(std.c[:n] @ y[:n] + std.c[:n] @ std.lb + c0)
    return SimplexResult("optimal", obj, v, list(basis), std, pivots)


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, lb=None, ub=None, c0=0.0) -> SimplexResult:
    c = np.asarray(c, dtype=np.float64)
    n = c.shape[0]
    A_ub = np.zeros((0, n)) if A_ub is None else A_ub
    b_ub = np.zeros(0) if b_ub is None else b_ub
    A_eq = np.zeros((0, n)) if A_eq is None else A_eq
    b_eq = np.zeros(0) if b_eq is None else b_eq
    lb = np.zeros(n) if lb is None else lb
    ub = np.full(n, np.inf) if ub is None else ub
    std = to_standard_form(c, A_ub, b_ub, A_eq, b_eq, lb, ub)
    return solve_standard(std, c0)
