"""Regenerate the problem files bundled in src/gcpverify/data.

Every fixture is either written by hand or drawn from the seeded generator,
so rerunning this script reproduces the directory exactly.
"""

from pathlib import Path

import numpy as np

from gcpverify.cuts import CutSet, write_cuts
from gcpverify.generate import random_instance
from gcpverify.gomory import gomory_generate, validate_cut
from gcpverify.lp_oracle import add_cuts, build_lp, simplex_solve
from gcpverify.model import AffineLayer, InputBox, Network, Spec, canonicalize, save_problem
from gcpverify.propagation import intermediate_bounds

DATA = Path(__file__).resolve().parents[1] / "src" / "gcpverify" / "data"
HARD_SEED = 1186
SUITE_SEEDS = (5, 24, 36, 41, 58, 64, 70, 73)


def net_of(*layers):
    layers = tuple(AffineLayer(np.array(w, float), np.array(b, float)) for w, b in layers)
    return Network(layers, layers[0].in_dim)


def find_toy2():
    """First 2-2-1 instance whose root LP has a fractional z and a cut that lifts it."""
    for seed in range(10_000):
        inst = random_instance(seed, n_layers=(2, 2), width=(2, 2), input_dim=(2, 2), out_dim=1)
        b, st = intermediate_bounds(inst.net, inst.box, "crown")
        if st.num_unstable != 2:
            continue
        model = build_lp(inst.net, inst.box, b, st)
        sol = simplex_solve(model)
        cuts = gomory_generate(model, sol, 1, inst.net, inst.box)
        if not cuts or not all(validate_cut(inst.net, inst.box, b, st, c) for c in cuts):
            continue
        lifted = simplex_solve(add_cuts(model, CutSet(tuple(cuts)))).objective
        if lifted > sol.objective + 1e-3:
            return inst, CutSet(tuple(cuts))
    raise RuntimeError("no toy2 candidate found")


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    one = Spec(np.array([1.0]))
    save_problem(DATA / "identity.json", net_of(([[1.0]], [2.0])), InputBox([0.0], 1.0), one)
    save_problem(DATA / "relu_shift.json", net_of(([[1.0]], [0.0]), ([[1.0]], [-0.5])),
                 InputBox([0.0], 1.0), one)
    save_problem(DATA / "stable.json", net_of(([[1.0, 0.5], [-0.5, 1.0]], [3.0, -4.0]), ([[1.0, 2.0]], [0.1])),
                 InputBox([0.0, 0.0], 1.0), one)

    inst, cuts = find_toy2()
    save_problem(DATA / "toy2.json", inst.raw, inst.box, inst.spec)
    write_cuts(DATA / "toy2_cuts.json", cuts)

    hard = random_instance(HARD_SEED, n_layers=(2, 3), width=(3, 6))
    save_problem(DATA / "hard_toy.json", hard.raw, hard.box, hard.spec)

    suite = DATA / "suite"
    suite.mkdir(exist_ok=True)
    for seed in SUITE_SEEDS:
        inst = random_instance(seed, width=(2, 8))
        save_problem(suite / f"rand_{seed:03d}.json", inst.raw, inst.box, inst.spec)


if __name__ == "__main__":
    main()
