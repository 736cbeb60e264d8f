"""Branch and bound over ReLU sign splits with a live cut pool.

Intermediate bounds and neuron status are computed once at the root and frozen.
A domain is the root problem plus a set of sign splits; splits enter the bound
only as per-domain multipliers (the split-as-cut view), so every root cut stays
valid in every subdomain.  A domain whose unstable neurons are all split is a
single linear region and is closed exactly by one LP.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .cuts import CutPool, CutSet
from .gcp import GcpParams, GcpProblem, OptConfig, optimize_batch
from .lp_oracle import build_lp, simplex_solve, solve_pattern
from .model import InputBox, Network, Spec, canonicalize, forward
from .propagation import NeuronStatus, PreActBounds, default_alpha, intermediate_bounds

log = logging.getLogger(__name__)

VERIFIED, FALSIFIED, UNKNOWN = "verified", "falsified", "unknown"
ORDERINGS = ("easiest_first", "hardest_first")


@dataclass
class BabConfig:
    batch_size: int = 8
    ordering: str = "easiest_first"
    timeout: float = 60.0
    max_domains: int = 100_000
    opt: OptConfig = field(default_factory=OptConfig)
    seed: int = 0
    gomory_rounds: int = 3
    cut_sync: bool = False        # finish cut generation before the first branch
    validate_cap: int = 8         # enumerate-and-check generated cuts up to this many unstable neurons
    split_indicator: bool = True  # add the implied z cut for each split (see _BatchBounder)

    def __post_init__(self):
        if self.ordering not in ORDERINGS:
            raise ValueError(f"ordering must be one of {ORDERINGS}")
        if self.batch_size < 1 or self.max_domains < 1 or self.timeout <= 0:
            raise ValueError("batch_size, max_domains and timeout must be positive")


@dataclass
class Domain:
    splits: tuple                     # ((layer, neuron, sign), ...) in split order
    lower_bound: float
    warm_start: GcpParams             # alpha per layer, beta per pool cut at cut_version
    cut_version: int
    split_mult: dict = field(default_factory=dict)   # (layer, neuron) -> (pre multiplier, z multiplier)
    candidate: np.ndarray | None = None

    @property
    def split_map(self) -> dict:
        return {(l, j): s for l, j, s in self.splits}


@dataclass
class VerificationResult:
    """``bound`` is a certified lower bound on ``min f`` unless falsified, where it is ``f(counterexample)``."""

    verdict: str
    bound: float
    counterexample: np.ndarray | None = None
    stats: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)


class NoBranchError(ValueError):
    pass


def select_branch(net: Network, bounds: PreActBounds, status: NeuronStatus, domain: Domain) -> tuple:
    """Unsplit unstable neuron maximising ``min(u, -l) * ||W^(i+1)[:, j]||_1``.

    Ties go to the lowest ``(layer, neuron)``.
    """
    taken = domain.split_map
    best, best_score = None, -np.inf
    for layer, j in status.unstable_neurons():
        if (layer, j) in taken:
            continue
        l, u = bounds.layer(layer)
        score = min(u[j], -l[j]) * np.abs(net.weights(layer + 1)[:, j]).sum()
        if score > best_score:
            best, best_score = (layer, j), score
    if best is None:
        raise NoBranchError("every unstable neuron of this domain is already split")
    return best


class _BatchBounder:
    """Bounds many domains at once against one pool snapshot."""

    def __init__(self, net, box, bounds, status, pool: CutPool, cfg: BabConfig):
        self.net, self.box, self.bounds, self.status = net, box, bounds, status
        self.pool, self.cfg = pool, cfg
        self.dims = net.hidden_dims
        self._prob = None
        self._version = -1
        self.evaluations = 0

    def problem(self):
        version, cuts = self.pool.snapshot()
        if version != self._version:
            self._prob = GcpProblem(self.net, self.box, self.bounds, self.status, cuts)
            self._version = version
        return self._version, self._prob

    def init_alpha(self, splits) -> list:
        alpha = default_alpha(self.bounds, len(self.dims))
        for layer, j, sign in splits:
            alpha[layer - 1][j] = 1.0 if sign > 0 else 0.0
        return alpha

    def bound(self, items):
        """``items``: list of (splits, warm GcpParams or None, split_mult dict).

        Returns a list of (bound, params, split_mult, candidate x) and the snapshot version.
        """
        version, prob = self.problem()
        B, n = len(items), prob.num_cuts
        alpha = [np.empty((B, d)) for d in self.dims]
        beta = np.zeros((B, n))
        ssign = [np.zeros((B, d)) for d in self.dims]
        sbeta = [np.zeros((B, d)) for d in self.dims]
        zbeta = [np.zeros((B, d)) for d in self.dims]
        for r, (splits, warm, mult) in enumerate(items):
            init = self.init_alpha(splits) if warm is None else warm.alpha
            for k in range(len(self.dims)):
                alpha[k][r] = init[k]
            if warm is not None:
                m = min(n, warm.beta.shape[0])
                beta[r, :m] = warm.beta[:m]
            for layer, j, sign in splits:
                ssign[layer - 1][r, j] = sign
                bp, bz = mult.get((layer, j), (0.0, 0.0))
                sbeta[layer - 1][r, j] = bp
                zbeta[layer - 1][r, j] = bz
        use_split = any(items[r][0] for r in range(B))
        if use_split:
            g, best, _ = optimize_batch(prob, alpha, beta, self.cfg.opt, ssign, sbeta,
                                        zbeta if self.cfg.split_indicator else None)
        else:
            g, best, _ = optimize_batch(prob, alpha, beta, self.cfg.opt)
        self.evaluations += B
        nl = len(self.dims)
        out = []
        x0, eps = self.box.center, self.box.eps
        for r, (splits, _, _) in enumerate(items):
            params = GcpParams([a[r].copy() for a in best[0]], best[1][r].copy())
            mult = {}
            if use_split:
                for layer, j, _ in splits:
                    bz = best[2][nl + layer - 1][r, j] if self.cfg.split_indicator else 0.0
                    mult[(layer, j)] = (float(best[2][layer - 1][r, j]), float(bz))
            cand = self.box.clamp(x0 - eps * np.sign(best[3][r]))
            out.append((float(g[r]), params, mult, cand))
        return out, version


class _Search:
    def __init__(self, net: Network, box: InputBox, cfg: BabConfig, pool: CutPool, on_start=None):
        self.net, self.box, self.cfg, self.pool = net, box, cfg, pool
        self.t0 = time.perf_counter()
        self.on_start = on_start
        self.phase = {}

    def elapsed(self):
        return time.perf_counter() - self.t0

    def _result(self, verdict, bound, cex=None, **extra):
        stats = {"domains": self.domains, "bound_evaluations": self.bounder.evaluations if hasattr(self, "bounder") else 0,
                 "cuts_used": self.pool.version, "cuts_per_iteration": self.cuts_per_iter,
                 "max_depth": self.max_depth, "leaf_lps": self.leaf_lps,
                 "seconds": self.elapsed(), "phase_seconds": dict(self.phase)}
        stats.update(extra)
        return VerificationResult(verdict, float(bound), cex, stats, self.trace)

    def _falsify(self, xs):
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        xs = np.array([self.box.clamp(x) for x in xs])
        vals = np.atleast_1d(forward(self.net, xs))
        k = int(np.argmin(vals))
        if vals[k] < 0:
            return xs[k], float(vals[k])
        return None, None

    def run(self) -> VerificationResult:
        net, box, cfg = self.net, self.box, self.cfg
        self.domains, self.max_depth, self.leaf_lps = 0, 0, 0
        self.cuts_per_iter, self.trace = [], []

        cex, val = self._falsify([box.center])
        t = time.perf_counter()
        self.bounds, self.status = intermediate_bounds(net, box, "crown")
        self.phase["intermediate"] = time.perf_counter() - t
        if cex is not None:
            return self._result(FALSIFIED, val, cex)
        unstable = self.status.unstable_neurons()

        t = time.perf_counter()
        lp = simplex_solve(build_lp(net, box, self.bounds, self.status))
        self.phase["root_lp"] = time.perf_counter() - t
        if lp.optimal:
            cex, val = self._falsify([lp.input_point()])
            if cex is not None:
                return self._result(FALSIFIED, val, cex)

        if self.on_start is not None:
            self.on_start(self.bounds, self.status, lp)

        self.bounder = _BatchBounder(net, box, self.bounds, self.status, self.pool, cfg)
        t = time.perf_counter()
        [(g, params, _, cand)], version = self.bounder.bound([((), None, {})])
        self.phase["root_bound"] = time.perf_counter() - t
        self.domains = 1
        self.root_bound = g
        cex, val = self._falsify([cand])
        if cex is not None:
            return self._result(FALSIFIED, val, cex)
        if g >= 0:
            return self._result(VERIFIED, g)
        root = Domain((), g, params, version, {}, cand)
        if not unstable:
            # a single linear region: one LP settles it
            self.leaf_lps += 1
            val, x = solve_pattern(net, box, self.status, {})
            if val >= 0:
                return self._result(VERIFIED, max(val, g))
            cex, v = self._falsify([x])
            if cex is not None:
                return self._result(FALSIFIED, v, cex)
            return self._result(UNKNOWN, val, reason="rounding")

        sign = 1.0 if cfg.ordering == "easiest_first" else -1.0
        counter = itertools.count()
        heap = [(-sign * root.lower_bound, next(counter), root)]
        closed_min = np.inf
        inconclusive = 0
        t_loop = time.perf_counter()
        while heap:
            if self.elapsed() > cfg.timeout:
                return self._result(UNKNOWN, min(closed_min, self._open_min(heap)), reason="timeout")
            if self.domains >= cfg.max_domains:
                return self._result(UNKNOWN, min(closed_min, self._open_min(heap)), reason="domain_cap")
            batch = [heapq.heappop(heap)[2] for _ in range(min(cfg.batch_size, len(heap)))]
            version = self.pool.version
            self.cuts_per_iter.append(version)

            stale = [d for d in batch if d.cut_version < version]
            if stale:
                res, v = self.bounder.bound([(d.splits, d.warm_start, d.split_mult) for d in stale])
                for d, (g, params, mult, cand) in zip(stale, res):
                    if g > d.lower_bound:
                        d.lower_bound, d.warm_start, d.split_mult = g, params, mult
                    d.cut_version = v
            keep = []
            for d in batch:
                self.trace.append((d.splits, d.lower_bound))
                if d.lower_bound >= 0:
                    closed_min = min(closed_min, d.lower_bound)
                else:
                    keep.append(d)
            if not keep:
                continue

            children, leaves = [], []
            for d in keep:
                layer, j = select_branch(net, self.bounds, self.status, d)
                for s in (1, -1):
                    splits = d.splits + ((layer, j, s),)
                    mult = dict(d.split_mult)
                    mult[(layer, j)] = (0.0, 0.0)
                    warm = d.warm_start.copy()
                    warm.alpha[layer - 1][j] = 1.0 if s > 0 else 0.0
                    if len(splits) == len(unstable):
                        leaves.append((splits, d))
                    else:
                        children.append((splits, warm, mult, d))
                    self.max_depth = max(self.max_depth, len(splits))
            self.domains += len(children) + len(leaves)

            for splits, parent in leaves:
                self.leaf_lps += 1
                pattern = {(l, j): int(s > 0) for l, j, s in splits}
                val, x = solve_pattern(net, box, self.status, pattern)
                if x is None or val >= 0:
                    closed_min = min(closed_min, max(val, parent.lower_bound))
                    continue
                cex, v = self._falsify([x])
                if cex is not None:
                    return self._result(FALSIFIED, v, cex)
                inconclusive += 1          # negative only by rounding
                closed_min = min(closed_min, val)

            if children:
                res, v = self.bounder.bound([(s, w, m) for s, w, m, _ in children])
                cands = [r[3] for r in res]
                cex, val = self._falsify(cands)
                if cex is not None:
                    return self._result(FALSIFIED, val, cex)
                for (splits, _, _, parent), (g, params, mult, cand) in zip(children, res):
                    g = max(g, parent.lower_bound)
                    child = Domain(splits, g, params, v, mult, cand)
                    if g >= 0:
                        closed_min = min(closed_min, g)
                        self.trace.append((splits, g))
                    else:
                        heapq.heappush(heap, (-sign * g, next(counter), child))
        self.phase["branching"] = time.perf_counter() - t_loop
        if not np.isfinite(closed_min):      # every leaf region was empty
            closed_min = self.root_bound
        if inconclusive:
            return self._result(UNKNOWN, closed_min, reason="rounding")
        return self._result(VERIFIED, closed_min)

    @staticmethod
    def _open_min(heap):
        return min((d.lower_bound for _, _, d in heap), default=np.inf)


def _canonical(net: Network, spec: Spec | None) -> Network:
    return net if spec is None else canonicalize(net, spec)


def bound_domain(net: Network, box: InputBox, bounds: PreActBounds, status: NeuronStatus,
                 domain: Domain, pool: CutPool, config: BabConfig | None = None) -> Domain:
    """Re-bound one domain against the current pool snapshot (monotone in the recorded bound)."""
    cfg = config or BabConfig()
    bounder = _BatchBounder(net, box, bounds, status, pool, cfg)
    [(g, params, mult, cand)], version = bounder.bound([(domain.splits, domain.warm_start, domain.split_mult)])
    if g < domain.lower_bound:
        return Domain(domain.splits, domain.lower_bound, domain.warm_start, version, domain.split_mult,
                      domain.candidate)
    return Domain(domain.splits, g, params, version, mult, cand)


def root_domain(net: Network, box: InputBox, bounds: PreActBounds) -> Domain:
    alpha = default_alpha(bounds, net.num_layers - 1)
    return Domain((), -np.inf, GcpParams(alpha, np.zeros(0)), 0)


def verify(net: Network, box: InputBox, spec: Spec | None = None, config: BabConfig | None = None,
           pool: CutPool | None = None) -> VerificationResult:
    """Complete verification of ``min f(x) >= 0`` over the box.

    ``pool`` may hold fixed cuts (for example loaded from a file); it is never modified here.
    """
    cfg = config or BabConfig()
    return _Search(_canonical(net, spec), box, cfg, pool or CutPool()).run()


def _generate_into(net, box, bounds, status, lp, pool: CutPool, cfg: BabConfig, stats: dict):
    from .gomory import gomory_generate, validate_cut

    check = status.num_unstable <= cfg.validate_cap

    def accept(cuts):
        good = [c for c in cuts if not check or validate_cut(net, box, bounds, status, c)]
        stats["rejected"] += len(cuts) - len(good)
        if good:
            pool.append(good)
        stats["rounds"] += 1

    try:
        if lp is None or not lp.optimal:
            return
        model = lp.model
        gomory_generate(model, lp, cfg.gomory_rounds, net, box, on_round=accept)
    except Exception as exc:  # generator trouble must never change the verdict
        log.warning("cut generator failed: %s", exc)
        stats["error"] = str(exc)


def run_with_cut_generator(net: Network, box: InputBox, spec: Spec | None = None,
                           config: BabConfig | None = None, enabled: bool = True,
                           pool: CutPool | None = None) -> VerificationResult:
    """``verify`` with a concurrent Gomory cut producer feeding the shared pool.

    Pass ``pool`` to inspect the generated cuts afterwards; it may already hold cuts.
    """
    cfg = config or BabConfig()
    net = _canonical(net, spec)
    pool = pool if pool is not None else CutPool()
    gen_stats = {"rounds": 0, "rejected": 0}
    threads = []

    def start(bounds, status, lp):
        if not enabled:
            return
        th = threading.Thread(target=_generate_into, name="gomory",
                              args=(net, box, bounds, status, lp, pool, cfg, gen_stats), daemon=True)
        th.start()
        threads.append(th)
        if cfg.cut_sync:
            th.join()

    result = _Search(net, box, cfg, pool, on_start=start).run()
    for th in threads:
        th.join(timeout=max(0.0, cfg.timeout - result.stats["seconds"]))
    result.stats["generator"] = gen_stats
    return result
