import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import Bounds, LinearConstraint, linprog as highs, milp

from gcpverify.cuts import Cut, CutError, CutSet
from gcpverify.generate import random_instance
from gcpverify.lp_oracle import (OracleCapError, add_cuts, build_lp, enumerate_patterns, exact_fstar,
                                 simplex_solve, write_lp)
from gcpverify.model import forward
from gcpverify.propagation import NeuronStatus

from conftest import fixture, rooted


def highs_lp(model):
    res = highs(model.c, A_ub=model.A_ub if len(model.b_ub) else None, b_ub=model.b_ub if len(model.b_ub) else None,
                A_eq=model.A_eq if len(model.b_eq) else None, b_eq=model.b_eq if len(model.b_eq) else None,
                bounds=list(zip(model.lb, model.ub)), method="highs")
    return res.fun + model.c0 if res.status == 0 else np.inf


def highs_mip(model):
    """Same model with every z declared integer, solved by HiGHS branch and cut."""
    integrality = np.array([1 if n[0] == "z" else 0 for n in model.names])
    cons = []
    if len(model.b_ub):
        cons.append(LinearConstraint(model.A_ub, -np.inf, model.b_ub))
    if len(model.b_eq):
        cons.append(LinearConstraint(model.A_eq, model.b_eq, model.b_eq))
    res = milp(model.c, constraints=cons, integrality=integrality, bounds=Bounds(model.lb, model.ub),
               options={"mip_rel_gap": 1e-12})
    return res.fun + model.c0


def test_stable_net_lp_is_exact():
    net, box, b, status = rooted(*fixture("stable"))
    model = build_lp(net, box, b, status)
    assert not any(n[0] == "z" for n in model.names)
    assert simplex_solve(model).objective == pytest.approx(exact_fstar(net, box, b, status), abs=1e-9)
    assert exact_fstar(net, box, b, status) == pytest.approx(1.6)


@pytest.mark.parametrize("form", ["z_form", "planet"])
def test_relu_shift_lp(form):
    net, box, b, status = rooted(*fixture("relu_shift"))
    assert simplex_solve(build_lp(net, box, b, status, form)).objective == pytest.approx(-0.5, abs=1e-9)
    assert exact_fstar(net, box, b, status) == pytest.approx(-0.5, abs=1e-9)


def test_toy2_forms_agree_and_match_highs():
    net, box, b, status = rooted(*fixture("toy2"))
    z = build_lp(net, box, b, status, "z_form")
    p = build_lp(net, box, b, status, "planet")
    vz, vp = simplex_solve(z).objective, simplex_solve(p).objective
    assert vz == pytest.approx(vp, abs=1e-7)
    assert vz == pytest.approx(highs_lp(z), abs=1e-7)


def test_unknown_form_rejected():
    net, box, b, status = rooted(*fixture("toy2"))
    with pytest.raises(ValueError):
        build_lp(net, box, b, status, "triangle")


@given(st.integers(0, 5000))
def test_lp_matches_highs_and_forms_agree(seed):
    net, box, b, status = rooted(random_instance(seed, width=(2, 7)))
    z = build_lp(net, box, b, status, "z_form")
    sol = simplex_solve(z)
    assert sol.objective == pytest.approx(highs_lp(z), abs=1e-6)
    assert sol.objective == pytest.approx(simplex_solve(build_lp(net, box, b, status, "planet")).objective, abs=1e-6)
    # residuals
    v = sol.point
    assert np.all(z.A_ub @ v <= z.b_ub + 1e-7) and np.allclose(z.A_eq @ v, z.b_eq, atol=1e-7)
    assert sol.objective == pytest.approx(z.c @ v + z.c0, abs=1e-8)


@given(st.integers(0, 3000))
def test_exact_fstar_matches_highs_mip(seed):
    net, box, b, status = rooted(random_instance(seed, width=(2, 6)))
    if status.num_unstable > 10:
        return
    fs, x = exact_fstar(net, box, b, status, return_point=True)
    assert fs == pytest.approx(highs_mip(build_lp(net, box, b, status)), abs=1e-6)
    assert box.contains(x, tol=1e-9)
    assert forward(net, x) == pytest.approx(fs, abs=1e-7)
    rng = np.random.default_rng(seed)
    samples = box.center + box.eps * rng.uniform(-1, 1, size=(500, box.center.size))
    assert fs <= forward(net, samples).min() + 1e-9


def test_toy2_chain():
    net, box, b, status = rooted(*fixture("toy2"))
    assert exact_fstar(net, box, b, status) >= simplex_solve(build_lp(net, box, b, status)).objective - 1e-9


def test_add_cuts_trivial_cases():
    net, box, b, status = rooted(*fixture("toy2"))
    model = build_lp(net, box, b, status)
    base = simplex_solve(model).objective
    assert add_cuts(model, CutSet()) is model
    zero = CutSet((Cut(((1, "z", 0, 0.0),), 0.0),))
    assert simplex_solve(add_cuts(model, zero)).objective == pytest.approx(base, abs=1e-12)
    with pytest.raises(CutError):
        add_cuts(model, CutSet((Cut(((1, "pre", 7, 1.0),), 0.0),)))


def test_infeasible_status():
    net, box, b, status = rooted(*fixture("relu_shift"))
    model = build_lp(net, box, b, status)
    # pre-activation >= 5 is outside its bounds [-1, 1]
    sol = simplex_solve(add_cuts(model, CutSet((Cut(((1, "pre", 0, -1.0),), -5.0),))))
    assert sol.status == "infeasible" and not sol.optimal


def test_enumeration_cap():
    codes = (np.zeros(21, dtype=np.int8),)
    with pytest.raises(OracleCapError):
        next(enumerate_patterns(NeuronStatus(codes)))
    assert len(list(enumerate_patterns(NeuronStatus((np.zeros(3, dtype=np.int8),))))) == 8


def test_write_lp(tmp_path):
    net, box, b, status = rooted(*fixture("toy2"))
    model = build_lp(net, box, b, status)
    path = tmp_path / "toy2.lp"
    write_lp(model, path)
    text = path.read_text()
    for section in ("Minimize", "Subject To", "Bounds", "End"):
        assert section in text
    assert text.count(" <= ") >= len(model.b_ub) + len(model.names)
    assert sum(line.startswith(" e") for line in text.splitlines()) == len(model.b_eq)
