"""
Branch and bound with a live cut pool
=====================================

The bundled ``hard_toy`` problem has a negative LP bound but a positive
LP-with-cuts bound.  Plain branch and bound has to split its way to a proof;
with the Gomory generator feeding cuts the search tree shrinks a lot.
"""

import time
from importlib.resources import files

from gcpverify import BabConfig, CutPool, canonicalize, load_problem, run_with_cut_generator, verify

net, box, spec = load_problem(files("gcpverify") / "data" / "hard_toy.json")
net = canonicalize(net, spec)

t = time.perf_counter()
plain = verify(net, box)
print(f"no cuts:   {plain.verdict:9s} bound {plain.bound:+.4f}  "
      f"domains {plain.stats['domains']:3d}  depth {plain.stats['max_depth']}  "
      f"{time.perf_counter() - t:.2f}s")

# cut_sync waits for the generator before the first branch, so the count is repeatable
pool = CutPool()
t = time.perf_counter()
res = run_with_cut_generator(net, box, config=BabConfig(cut_sync=True), pool=pool)
print(f"with cuts: {res.verdict:9s} bound {res.bound:+.4f}  "
      f"domains {res.stats['domains']:3d}  depth {res.stats['max_depth']}  "
      f"{time.perf_counter() - t:.2f}s")
print(f"{pool.version} cuts in the pool after {res.stats['generator']['rounds']} Gomory rounds")

# the same run without waiting: the search starts at once and picks cuts up between batches
live = run_with_cut_generator(net, box)
print("live generator, cuts seen per batch:", live.stats["cuts_per_iteration"])
