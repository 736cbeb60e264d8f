"""LP relaxations of the verification MIP and exact optimum by pattern enumeration.

Variables are named by tuples: ``("x", j)`` for inputs and ``(kind, i, j)`` with
``kind`` in ``pre``/``post``/``z`` for ReLU layer ``i`` (1-based) and neuron ``j``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cuts import CutError, CutSet
from .model import InputBox, Network
from .propagation import ACTIVE, INACTIVE, UNSTABLE, NeuronStatus, PreActBounds
from .simplex import FEAS_TOL, SimplexResult, linprog, solve_standard, to_standard_form

ENUM_CAP = 20


class OracleCapError(RuntimeError):
    """Too many unstable neurons for exhaustive enumeration."""


@dataclass(frozen=True)
class LpModel:
    names: tuple
    c: np.ndarray
    c0: float
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    form: str = "z_form"
    n_cuts: int = 0

    @property
    def index(self) -> dict:
        idx = self.__dict__.get("_index")
        if idx is None:
            idx = {name: k for k, name in enumerate(self.names)}
            object.__setattr__(self, "_index", idx)
        return idx

    @property
    def num_vars(self) -> int:
        return len(self.names)

    def row(self, terms) -> np.ndarray:
        """Dense coefficient row from ``{name: coef}`` (unknown names raise)."""
        out = np.zeros(self.num_vars)
        for name, coef in terms:
            try:
                out[self.index[name]] += coef
            except KeyError:
                raise CutError(f"variable {name} is not part of this LP") from None
        return out


@dataclass
class LpSolution:
    status: str
    objective: float
    point: np.ndarray | None
    basis: list = field(default_factory=list)
    result: SimplexResult | None = None
    model: LpModel | None = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def value(self, name) -> float:
        return float(self.point[self.model.index[name]])

    def input_point(self) -> np.ndarray:
        names = [n for n in self.model.names if n[0] == "x"]
        return np.array([self.value(n) for n in names])


class _Builder:
    def __init__(self):
        self.names, self.lb, self.ub = [], [], []
        self.index = {}
        self.ub_rows, self.ub_rhs, self.eq_rows, self.eq_rhs = [], [], [], []

    def var(self, name, lo, hi):
        self.index[name] = len(self.names)
        self.names.append(name)
        self.lb.append(float(lo))
        self.ub.append(float(hi))

    def le(self, terms, rhs):
        self.ub_rows.append(terms)
        self.ub_rhs.append(float(rhs))

    def eq(self, terms, rhs):
        self.eq_rows.append(terms)
        self.eq_rhs.append(float(rhs))

    def _dense(self, rows):
        A = np.zeros((len(rows), len(self.names)))
        for r, terms in enumerate(rows):
            for name, coef in terms:
                A[r, self.index[name]] += coef
        return A


def build_lp(net: Network, box: InputBox, bounds: PreActBounds, status: NeuronStatus,
             form: str = "z_form") -> LpModel:
    """LP relaxation with binary ReLU indicators relaxed (``z_form``) or projected out (``planet``)."""
    if form not in ("z_form", "planet"):
        raise ValueError(f"unknown LP form {form!r}")
    bld = _Builder()
    for j in range(net.input_dim):
        bld.var(("x", j), box.lower[j], box.upper[j])
    prev = [("x", j) for j in range(net.input_dim)]
    L = net.num_layers
    for i in range(1, L):
        W, b = net.weights(i), net.biases(i)
        l, u = bounds.layer(i)
        codes = status.codes[i - 1]
        for j in range(W.shape[0]):
            pre, post = ("pre", i, j), ("post", i, j)
            bld.var(pre, l[j], u[j])
            code = codes[j]
            if code == ACTIVE:
                bld.var(post, l[j], u[j])
            elif code == INACTIVE:
                bld.var(post, 0.0, 0.0)
            else:
                bld.var(post, 0.0, max(u[j], 0.0))
            bld.eq([(pre, 1.0)] + [(p, -W[j, k]) for k, p in enumerate(prev) if W[j, k] != 0], b[j])
            if code == ACTIVE:
                bld.eq([(post, 1.0), (pre, -1.0)], 0.0)
            elif code == INACTIVE:
                bld.eq([(post, 1.0)], 0.0)
            else:
                bld.le([(post, -1.0)], 0.0)
                bld.le([(pre, 1.0), (post, -1.0)], 0.0)
                if form == "z_form":
                    z = ("z", i, j)
                    bld.var(z, 0.0, 1.0)
                    bld.le([(post, 1.0), (z, -u[j])], 0.0)
                    bld.le([(post, 1.0), (pre, -1.0), (z, -l[j])], -l[j])
                else:
                    s = u[j] / (u[j] - l[j])
                    bld.le([(post, 1.0), (pre, -s)], -s * l[j])
        prev = [("post", i, j) for j in range(W.shape[0])]
    c = np.zeros(len(bld.names))
    W, b = net.weights(L), net.biases(L)
    for k, p in enumerate(prev):
        c[bld.index[p]] += W[0, k]
    return LpModel(tuple(bld.names), c, float(b[0]),
                   bld._dense(bld.ub_rows), np.array(bld.ub_rhs),
                   bld._dense(bld.eq_rows), np.array(bld.eq_rhs),
                   np.array(bld.lb), np.array(bld.ub), form)


def cut_row(model: LpModel, cut) -> np.ndarray:
    return model.row([((kind, layer, neuron), coef) for layer, kind, neuron, coef in cut.terms])


def add_cuts(model: LpModel, cuts: CutSet) -> LpModel:
    """Append every cut as a ``<=`` row."""
    cuts = list(cuts)
    if not cuts:
        return model
    rows = np.array([cut_row(model, c) for c in cuts])
    rhs = np.array([c.rhs for c in cuts])
    return LpModel(model.names, model.c, model.c0,
                   np.vstack([model.A_ub, rows]), np.concatenate([model.b_ub, rhs]),
                   model.A_eq, model.b_eq, model.lb, model.ub, model.form,
                   model.n_cuts + len(cuts))


def simplex_solve(model: LpModel) -> LpSolution:
    std = to_standard_form(model.c, model.A_ub, model.b_ub, model.A_eq, model.b_eq, model.lb, model.ub)
    res = solve_standard(std, model.c0)
    if res.status != "optimal":
        return LpSolution("infeasible", np.inf, None, [], res, model)
    v = res.v
    scale = 1.0 + np.abs(v).max(initial=0.0)
    viol = max(
        np.max(model.A_ub @ v - model.b_ub, initial=0.0),
        np.max(np.abs(model.A_eq @ v - model.b_eq), initial=0.0),
        np.max(model.lb - v, initial=0.0),
        np.max(v - model.ub, initial=0.0),
    )
    if viol > FEAS_TOL * scale:
        raise RuntimeError(f"simplex returned a point violating constraints by {viol:.3g}")
    return LpSolution("optimal", res.objective, v, res.basis, res, model)


def write_lp(model: LpModel, path) -> None:
    """Dump the model in the common CPLEX-style LP text layout."""

    def vname(name):
        return "_".join(str(p) for p in name)

    def expr(row):
        parts = [f"{'+' if c >= 0 else '-'} {abs(c):.17g} {vname(n)}"
                 for n, c in zip(model.names, row) if c != 0]
        return " ".join(parts) if parts else "0 " + vname(model.names[0])

    lines = ["\\ ReLU network verification LP", "Minimize", f" obj: {expr(model.c)} {'+' if model.c0 >= 0 else '-'} {abs(model.c0):.17g}",
             "Subject To"]
    for k, (row, rhs) in enumerate(zip(model.A_ub, model.b_ub)):
        lines.append(f" r{k}: {expr(row)} <= {rhs:.17g}")
    for k, (row, rhs) in enumerate(zip(model.A_eq, model.b_eq)):
        lines.append(f" e{k}: {expr(row)} = {rhs:.17g}")
    lines.append("Bounds")
    for n, lo, hi in zip(model.names, model.lb, model.ub):
        lines.append(f" {lo:.17g} <= {vname(n)} <= {hi:.17g}")
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- enumeration

def pattern_affine(net: Network, status: NeuronStatus, pattern: dict):
    """Affine maps ``x^(i) = M_i x + m_i`` for i = 1..L under a full activation pattern.

    ``pattern`` maps each unstable ``(layer, neuron)`` to 1 (active) or 0 (inactive).
    Also returns the 0/1 gate vector of every ReLU layer.
    """
    M = np.eye(net.input_dim)
    m = np.zeros(net.input_dim)
    maps, gates = [], []
    for i in range(1, net.num_layers + 1):
        W, b = net.weights(i), net.biases(i)
        M, m = W @ M, W @ m + b
        maps.append((M, m))
        if i < net.num_layers:
            codes = status.codes[i - 1]
            gate = (codes == ACTIVE).astype(np.float64)
            for j in np.flatnonzero(codes == UNSTABLE):
                gate[j] = float(pattern[(i, int(j))])
            gates.append(gate)
            M, m = gate[:, None] * M, gate * m
    return maps, gates


def pattern_region(net: Network, status: NeuronStatus, pattern: dict, maps=None):
    """Rows ``G x <= h`` forcing each unstable pre-activation to the sign in ``pattern``."""
    if maps is None:
        maps, _ = pattern_affine(net, status, pattern)
    G, h = [], []
    for (i, j), on in pattern.items():
        M, m = maps[i - 1]
        sign = -1.0 if on else 1.0
        G.append(sign * M[j])
        h.append(-sign * m[j])
    G = np.array(G).reshape(-1, net.input_dim)
    return G, np.array(h)


def solve_pattern(net: Network, box: InputBox, status: NeuronStatus, pattern: dict, objective=None):
    """Minimise a linear function of the input over one activation region.

    ``objective`` is ``(coeffs over x, constant)``; the default is the network
    output restricted to the region.  Returns ``(value, x)`` or ``(inf, None)``.
    """
    maps, gates = pattern_affine(net, status, pattern)
    if objective is None:
        M, m = maps[-1]
        objective = (M[0], float(m[0]))
    G, h = pattern_region(net, status, pattern, maps)
    res = linprog(objective[0], G, h, None, None, box.lower, box.upper, objective[1])
    if res.status != "optimal":
        return np.inf, None
    return res.objective, res.v


def enumerate_patterns(status: NeuronStatus, cap: int = ENUM_CAP, fixed: dict | None = None):
    unstable = status.unstable_neurons()
    free = [n for n in unstable if not fixed or n not in fixed]
    if len(free) > cap:
        raise OracleCapError(f"{len(free)} unstable neurons exceed the enumeration cap of {cap}")
    for bits in itertools.product((0, 1), repeat=len(free)):
        pattern = dict(fixed or {})
        pattern.update(zip(free, bits))
        yield pattern


def exact_fstar(net: Network, box: InputBox, bounds: PreActBounds, status: NeuronStatus,
                cap: int = ENUM_CAP, return_point: bool = False):
    """Exact ``min f(x)`` over the box by solving one LP per activation pattern."""
    best, best_x = np.inf, None
    for pattern in enumerate_patterns(status, cap):
        val, x = solve_pattern(net, box, status, pattern)
        if val < best:
            best, best_x = val, x
    if not np.isfinite(best):
        raise RuntimeError("every activation pattern is infeasible; bounds or status are inconsistent")
    return (best, best_x) if return_point else best
