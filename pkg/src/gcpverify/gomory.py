"""Gomory mixed-integer cuts from the optimal simplex tableau, and cut validation."""

from __future__ import annotations

import numpy as np

from .cuts import Cut, CutError, CutSet
from .lp_oracle import (ENUM_CAP, LpModel, LpSolution, OracleCapError, add_cuts, enumerate_patterns,
                        pattern_affine, pattern_region, simplex_solve)
from .model import InputBox, Network
from .propagation import NeuronStatus, PreActBounds
from .simplex import SimplexError, linprog

FRAC_LO, FRAC_HI = 0.01, 0.99
DROP_TOL = 1e-10
VALID_TOL = 1e-7


def _is_integer_var(name) -> bool:
    return name[0] == "z"


def _integer_slack(model: LpModel, row, rhs) -> bool:
    nz = np.flatnonzero(row)
    if nz.size == 0:
        return False
    if not all(_is_integer_var(model.names[k]) for k in nz):
        return False
    return bool(np.all(row[nz] == np.round(row[nz])) and rhs == np.round(rhs))


def _gmi_row(tab_row, f0, int_cols):
    """Coefficients ``gamma`` of the cut ``gamma . y >= 1`` over nonbasic columns."""
    a = tab_row
    gamma = np.where(a >= 0, a / f0, -a / (1 - f0))
    fj = a[int_cols] - np.floor(a[int_cols])
    gamma[int_cols] = np.where(fj <= f0, fj / f0, (1 - fj) / (1 - f0))
    return gamma


def _to_structured(model: LpModel, coef: np.ndarray, rhs: float, net: Network, box: InputBox):
    """Turn ``coef . v <= rhs`` into terms over ReLU-layer variables only.

    Input variables are rewritten through layer-1 pre-activations
    (``x^(1) = W1 x + b1``); any part not representable that way is bounded
    over the box, which only loosens the cut.  Fixed variables move to the
    right-hand side and tiny coefficients are dropped conservatively.
    """
    names = model.names
    x_idx = [k for k, n in enumerate(names) if n[0] == "x"]
    cx = coef[x_idx]
    coef = coef.copy()
    coef[x_idx] = 0.0
    if np.any(cx != 0):
        if net.num_layers < 2:
            return None
        W1, b1 = net.weights(1), net.biases(1)
        y, *_ = np.linalg.lstsq(W1.T, cx, rcond=None)
        r = cx - W1.T @ y
        for j, yj in enumerate(y):
            coef[model.index[("pre", 1, j)]] += yj
        rhs = rhs + y @ b1 - (r @ box.center - box.eps * np.abs(r).sum())
    lb, ub = model.lb, model.ub
    fixed = lb == ub
    rhs -= coef[fixed] @ lb[fixed]
    coef[fixed] = 0.0
    small = (np.abs(coef) < DROP_TOL) & (coef != 0)
    if np.any(small):
        c = coef[small]
        rhs -= np.minimum(c * lb[small], c * ub[small]).sum()
        coef[small] = 0.0
    nz = np.flatnonzero(coef)
    if nz.size == 0:
        return None
    scale = np.abs(coef[nz]).max()
    terms = []
    for k in nz:
        kind, layer, neuron = names[k]
        terms.append((layer, kind, neuron, coef[k] / scale))
    return Cut(tuple(terms), rhs / scale)


def gomory_round(model: LpModel, solution: LpSolution, net: Network, box: InputBox) -> list:
    if not solution.optimal:
        return []
    res = solution.result
    std = res.std
    n = std.n_struct
    tab, rhs = res.tableau()
    basis = res.basis
    nonbasic = np.ones(std.n_cols, dtype=bool)
    nonbasic[basis] = False
    int_mask = np.zeros(std.n_cols, dtype=bool)
    int_mask[:n] = [_is_integer_var(nm) and lb == np.round(lb)
                    for nm, lb in zip(model.names, model.lb)]
    for k, (row, r_rhs) in enumerate(std.slack_rows):
        int_mask[n + k] = _integer_slack(model, row, r_rhs)
    cols = np.flatnonzero(nonbasic)
    int_cols = np.flatnonzero(int_mask[cols])
    cuts = []
    for r, bvar in enumerate(basis):
        if bvar >= n or not _is_integer_var(model.names[bvar]):
            continue
        value = rhs[r] + std.lb[bvar]
        f0 = value - np.floor(value)
        if not (FRAC_LO < f0 < FRAC_HI):
            continue
        gamma = _gmi_row(tab[r, cols], f0, int_cols)
        # gamma . y >= 1 with y_struct = v - lb and slack_k = rhs_k - row_k . v
        coef = np.zeros(n)
        const = 0.0
        for g, col in zip(gamma, cols):
            if g == 0.0:
                continue
            if col < n:
                coef[col] += g
                const -= g * std.lb[col]
            else:
                row, r_rhs = std.slack_rows[col - n]
                coef -= g * row
                const += g * r_rhs
        cut = _to_structured(model, -coef, const - 1.0, net, box)
        if cut is not None:
            cuts.append(cut)
    return cuts


def gomory_generate(model: LpModel, solution: LpSolution, max_rounds: int, net: Network,
                    box: InputBox, on_round=None) -> list:
    """Up to ``max_rounds`` rounds of (cut on fractional z rows, re-solve)."""
    found = []
    for _ in range(max_rounds):
        try:
            new = gomory_round(model, solution, net, box)
        except np.linalg.LinAlgError:
            break
        if not new:
            break
        found.extend(new)
        if on_round is not None:
            on_round(new)
        model = add_cuts(model, CutSet(tuple(new)))
        try:
            solution = simplex_solve(model)
        except (SimplexError, np.linalg.LinAlgError):
            # cuts found so far stay valid; only the next round is lost
            break
        if not solution.optimal:
            break
    return found


def _linear_in_input(cut: Cut, maps, gates, pattern, status: NeuronStatus):
    coeffs = np.zeros(maps[0][0].shape[1])
    const = 0.0
    for layer, kind, neuron, c in cut.terms:
        M, m = maps[layer - 1]
        if kind == "pre":
            coeffs += c * M[neuron]
            const += c * m[neuron]
        elif kind == "post":
            g = gates[layer - 1][neuron]
            coeffs += c * g * M[neuron]
            const += c * g * m[neuron]
        else:
            if (layer, neuron) not in pattern:
                raise CutError(f"cut uses z of stable neuron ({layer}, {neuron})")
            const += c * pattern[(layer, neuron)]
    return coeffs, const


def cut_violation(net: Network, box: InputBox, bounds: PreActBounds, status: NeuronStatus,
                  cut: Cut, cap: int = ENUM_CAP) -> float:
    """Largest ``lhs - rhs`` over all integer-feasible points of the MIP."""
    # the lhs only sees layers up to the deepest one it touches, and the
    # feasible set projected onto those layers is the union over their patterns
    depth = max(t[0] for t in cut.terms)
    deeper = {n: 0 for n in status.unstable_neurons() if n[0] > depth}
    worst = -np.inf
    for pattern in enumerate_patterns(status, cap, fixed=deeper):
        shallow = {n: v for n, v in pattern.items() if n[0] <= depth}
        maps, gates = pattern_affine(net, status, pattern)
        coeffs, const = _linear_in_input(cut, maps, gates, shallow, status)
        G, h = pattern_region(net, status, shallow, maps)
        res = linprog(-coeffs, G, h, None, None, box.lower, box.upper, -const)
        if res.status == "optimal":
            worst = max(worst, -res.objective - cut.rhs)
    return worst


def validate_cut(net: Network, box: InputBox, bounds: PreActBounds, status: NeuronStatus,
                 cut: Cut, cap: int = ENUM_CAP, tol: float = VALID_TOL) -> bool:
    """True iff no binary assignment admits a feasible point violating the cut by more than ``tol``."""
    try:
        return cut_violation(net, box, bounds, status, cut, cap) <= tol
    except CutError:
        return False
