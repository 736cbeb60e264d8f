"""
Exact oracles against the verifier on random networks
=====================================================

Draw small random networks, compute the exact minimum by enumerating
activation patterns, and check that every verdict agrees with its sign.
The bound chain ``CROWN <= GCP <= f*_LP-cut <= f*`` is printed per instance.
"""

from gcpverify import (BabConfig, CutSet, build_lp, crown_lower, exact_fstar, gomory_generate,
                       intermediate_bounds, optimize, simplex_solve, verify)
from gcpverify.generate import random_instance
from gcpverify.lp_oracle import add_cuts

print(f"{'seed':>4} {'unst':>4} {'crown':>9} {'gcp_cut':>9} {'lp':>9} {'lp_cut':>9} {'f*':>9}  verdict")
agree = 0
for seed in range(12):
    inst = random_instance(seed, width=(2, 6))
    net, box = inst.net, inst.box
    bounds, status = intermediate_bounds(net, box)
    model = build_lp(net, box, bounds, status)
    lp = simplex_solve(model)
    cuts = CutSet(tuple(gomory_generate(model, lp, 3, net, box)))
    lp_cut = simplex_solve(add_cuts(model, cuts)).objective
    fstar = exact_fstar(net, box, bounds, status)
    crown = crown_lower(net, box, bounds, status)[0]
    gcp = optimize(net, box, bounds, status, cuts).g
    res = verify(net, box, config=BabConfig(timeout=30))
    agree += res.verdict == ("verified" if fstar >= 0 else "falsified")
    print(f"{seed:4d} {status.num_unstable:4d} {crown:+9.4f} {gcp:+9.4f} {lp.objective:+9.4f} "
          f"{lp_cut:+9.4f} {fstar:+9.4f}  {res.verdict}")

print(f"verdicts agreeing with sign(f*): {agree}/12")
