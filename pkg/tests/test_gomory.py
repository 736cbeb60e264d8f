import numpy as np
import pytest
from scipy.optimize import Bounds, LinearConstraint, milp

from gcpverify.cuts import Cut, CutSet
from gcpverify.generate import random_instance
from gcpverify.gomory import cut_violation, gomory_generate, gomory_round, validate_cut
from gcpverify.lp_oracle import add_cuts, build_lp, cut_row, exact_fstar, simplex_solve

from conftest import DATA, fixture, rooted, small_instances
from gcpverify.cuts import read_cuts


def mip_max_lhs(net, box, b, status, cut):
    """Independent check: maximise the cut lhs over the MIP with HiGHS."""
    model = build_lp(net, box, b, status)
    row = cut_row(model, cut)
    integrality = np.array([1 if n[0] == "z" else 0 for n in model.names])
    cons = [LinearConstraint(model.A_ub, -np.inf, model.b_ub), LinearConstraint(model.A_eq, model.b_eq, model.b_eq)]
    res = milp(-row, constraints=cons, integrality=integrality, bounds=Bounds(model.lb, model.ub),
               options={"mip_rel_gap": 1e-12})
    return -res.fun


def generated(net, box, b, status, rounds=3):
    model = build_lp(net, box, b, status)
    sol = simplex_solve(model)
    return model, sol, gomory_generate(model, sol, rounds, net, box)


def test_validate_examples():
    net, box, b, status = rooted(*fixture("toy2"))
    assert validate_cut(net, box, b, status, Cut(((1, "z", 0, 0.0),), 0.0))
    assert not validate_cut(net, box, b, status, Cut(((1, "z", 0, 1.0),), -1.0))
    assert validate_cut(net, box, b, status, Cut(((1, "z", 0, 1.0),), 1.0))
    # post-activation of an unstable neuron is not always zero
    assert not validate_cut(net, box, b, status, Cut(((1, "post", 0, 1.0),), 0.0))


def test_toy2_cut_lifts_lp():
    net, box, b, status = rooted(*fixture("toy2"))
    model, sol, cuts = generated(net, box, b, status, rounds=1)
    assert cuts
    assert all(validate_cut(net, box, b, status, c) for c in cuts)
    lifted = simplex_solve(add_cuts(model, CutSet(tuple(cuts)))).objective
    assert lifted >= sol.objective + 1e-9
    assert lifted <= exact_fstar(net, box, b, status) + 1e-7


def test_bundled_toy2_cut_file_is_valid():
    net, box, b, status = rooted(*fixture("toy2"))
    cuts = read_cuts(DATA / "toy2_cuts.json", net.num_layers)
    assert len(cuts) >= 1
    assert all(validate_cut(net, box, b, status, c) for c in cuts)


def test_integral_lp_gives_no_cuts():
    for name in ("stable", "relu_shift"):
        net, box, b, status = rooted(*fixture(name))
        model, sol, cuts = generated(net, box, b, status)
        assert cuts == []
    net, box, b, status = rooted(*fixture("toy2"))
    model = build_lp(net, box, b, status)
    assert gomory_generate(model, simplex_solve(model), 0, net, box) == []


def test_generated_cuts_valid_on_random_nets():
    total, checked_mip = 0, 0
    for k, (net, box, b, status) in enumerate(small_instances(50, max_unstable=8, width=(2, 6))):
        model, sol, cuts = generated(net, box, b, status)
        total += len(cuts)
        for cut in cuts:
            assert cut_violation(net, box, b, status, cut) <= 1e-7
            if k < 10:
                # cross-check the enumeration with a MIP solver on a subset; HiGHS
                # accepts z within ~1e-6 of integral, hence the looser tolerance
                assert mip_max_lhs(net, box, b, status, cut) <= cut.rhs + 1e-5
                checked_mip += 1
        if cuts:
            val = simplex_solve(add_cuts(model, CutSet(tuple(cuts)))).objective
            assert sol.objective - 1e-7 <= val <= exact_fstar(net, box, b, status) + 1e-6
    assert total > 0 and checked_mip > 0


def test_cuts_are_normalised_and_terms_structured():
    net, box, b, status = rooted(random_instance(16, width=(2, 5)))
    _, _, cuts = generated(net, box, b, status)
    assert cuts
    for cut in cuts:
        assert max(abs(t[3]) for t in cut.terms) == pytest.approx(1.0)
        assert all(1 <= t[0] < net.num_layers for t in cut.terms)


def test_round_needs_optimal_solution():
    net, box, b, status = rooted(*fixture("toy2"))
    model = build_lp(net, box, b, status)
    bad = simplex_solve(add_cuts(model, CutSet((Cut(((1, "pre", 0, -1.0),), -100.0),))))
    assert gomory_round(model, bad, net, box) == []
