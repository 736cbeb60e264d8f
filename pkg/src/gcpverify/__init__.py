"""Complete verification of small ReLU networks with cut-aware bound propagation.

The lower bound on ``min f(x)`` over an l_inf box is a dual-feasible point of
the LP relaxation strengthened by arbitrary cutting planes; branch and bound
over neuron signs closes the remaining gap.  Cuts come from Gomory mixed-integer
rounds on an in-house simplex tableau.
"""

from .bab import (BabConfig, Domain, VerificationResult, bound_domain, run_with_cut_generator,
                  select_branch, verify)
from .cuts import Cut, CutError, CutPool, CutSet, pool_append, pool_snapshot, read_cuts, splits_to_cuts, write_cuts
from .gcp import GcpBound, GcpParams, OptConfig, grad_check, lemma_pi_gamma, optimize, propagate
from .gomory import gomory_generate, validate_cut
from .lp_oracle import OracleCapError, build_lp, exact_fstar, simplex_solve
from .model import (AffineLayer, InputBox, Network, ProblemError, Spec, canonicalize, forward,
                    load_problem, save_problem)
from .propagation import NeuronStatus, PreActBounds, crown_lower, ibp, intermediate_bounds

__version__ = "0.1.0"

__all__ = [
    "AffineLayer", "BabConfig", "Cut", "CutError", "CutPool", "CutSet", "Domain", "GcpBound",
    "GcpParams", "InputBox", "Network", "NeuronStatus", "OptConfig", "OracleCapError",
    "PreActBounds", "ProblemError", "Spec", "VerificationResult", "bound_domain", "build_lp",
    "canonicalize", "crown_lower", "exact_fstar", "forward", "gomory_generate", "grad_check", "ibp",
    "intermediate_bounds", "lemma_pi_gamma", "load_problem", "optimize", "pool_append",
    "pool_snapshot", "propagate", "read_cuts", "run_with_cut_generator", "save_problem",
    "select_branch", "simplex_solve", "splits_to_cuts", "validate_cut", "verify", "write_cuts",
]
