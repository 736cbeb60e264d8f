"""Bound propagation with general cutting planes.

The lower bound is a feasible point of the dual of the LP relaxation with
cuts.  Multipliers ``alpha`` (lower ReLU relaxation slopes, in [0, 1]) and
``beta`` (one per cut, >= 0) are free; every other dual variable is set in
closed form while propagating backwards from the output.

All work is vectorised over a leading batch axis so that many branch-and-bound
domains sharing the same root bounds and cut pool are bounded together.  Split
constraints can be passed either as ordinary cuts or, for batches, as per-domain
``(sign, multiplier)`` arrays on pre-activations, which is the same algebra.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .cuts import CutSet
from .model import InputBox, Network
from .propagation import ACTIVE, INACTIVE, UNSTABLE, NeuronStatus, PreActBounds, default_alpha

MIDDLE, ZERO, NEG_Q = "middle", "zero", "neg_q"


class KinkError(ValueError):
    """Parameters too close to a non-differentiable point for finite differences."""


@dataclass
class OptConfig:
    iterations: int = 20
    lr_alpha: float = 0.1
    lr_beta: float = 0.02
    decay: float = 0.9
    adam_b1: float = 0.9
    adam_b2: float = 0.999
    adam_eps: float = 1e-8


@dataclass
class GcpParams:
    """Per ReLU layer slopes (full width; only unstable entries matter) and cut multipliers."""

    alpha: list
    beta: np.ndarray

    def __post_init__(self):
        self.alpha = [np.asarray(a, dtype=np.float64) for a in self.alpha]
        self.beta = np.asarray(self.beta, dtype=np.float64).reshape(-1)

    def copy(self) -> "GcpParams":
        return GcpParams([a.copy() for a in self.alpha], self.beta.copy())

    def projected(self) -> "GcpParams":
        return GcpParams([np.clip(a, 0.0, 1.0) for a in self.alpha], np.maximum(self.beta, 0.0))

    def is_valid(self) -> bool:
        return all(np.all((a >= 0) & (a <= 1)) for a in self.alpha) and bool(np.all(self.beta >= 0))


@dataclass
class DualTrace:
    nu: list                      # nu^(1..L), nu[-1] == [-1]
    nuhat: list                   # per ReLU layer, full width (nan off the unstable set)
    pi: list
    gamma: list
    h: list
    branch: list                  # per ReLU layer, dict neuron -> branch tag
    input_coeffs: np.ndarray      # coefficients of x in the final linear bound


@dataclass
class GcpBound:
    g: float
    trace: DualTrace
    params: GcpParams
    history: list = field(default_factory=list)


def lemma_pi_gamma(u: float, l: float, C: float, q: float):
    """Maximise ``-relu(u*gamma + l*pi + q) + l*pi`` subject to ``pi + gamma = C``, ``pi, gamma >= 0``.

    Returns ``(pi, gamma, value, branch)`` where branch is ``middle`` when
    ``-uC <= q <= -lC``, ``zero`` when ``q < -uC`` and ``neg_q`` when ``q > -lC``.
    """
    if not (u - l > 0):
        raise ValueError(f"need u - l > 0, got u={u}, l={l}")
    width = u - l
    pi = max(min((u * C + q) / width, C), 0.0)
    gamma = max(min((-l * C - q) / width, C), 0.0)
    if q < -u * C:
        return pi, gamma, 0.0, ZERO
    if q > -l * C:
        return pi, gamma, -q, NEG_Q
    return pi, gamma, l * pi, MIDDLE


def _rows(mat, vec):
    """``vec @ mat`` for a sparse ``N x d`` matrix and a dense ``B x N`` batch."""
    if mat.shape[0] == 0:
        return np.zeros((vec.shape[0], mat.shape[1]))
    return np.asarray((mat.T @ vec.T).T)


def _cols(mat, vec):
    """``vec @ mat.T`` for a sparse ``N x d`` matrix and a dense ``B x d`` batch."""
    if mat.shape[0] == 0:
        return np.zeros((vec.shape[0], 0))
    return np.asarray((mat @ vec.T).T)


class GcpProblem:
    """Root data shared by every bound evaluation: network, box, frozen bounds and cuts."""

    def __init__(self, net: Network, box: InputBox, bounds: PreActBounds, status: NeuronStatus,
                 cuts: CutSet | None = None):
        self.net, self.box, self.bounds, self.status = net, box, bounds, status
        self.cuts = cuts if cuts is not None else CutSet()
        self.L = net.num_layers
        self.dims = net.hidden_dims
        self.blocks = self.cuts.blocks(self.dims)
        self.d = self.cuts.rhs
        self.codes = status.codes
        self.lower = [bounds.lower[k] for k in range(self.L - 1)]
        self.upper = [bounds.upper[k] for k in range(self.L - 1)]
        self.unstable = [c == UNSTABLE for c in self.codes]
        self.active = [c == ACTIVE for c in self.codes]
        self.inactive = [c == INACTIVE for c in self.codes]
        self.width = [np.where(m, u - l, 1.0) for m, l, u in zip(self.unstable, self.lower, self.upper)]
        for k, z_mat in enumerate(b[2] for b in self.blocks):
            bad = np.flatnonzero(np.asarray(abs(z_mat).sum(axis=0)).ravel() * ~self.unstable[k])
            if bad.size:
                raise ValueError(f"cut references z of stable neuron(s) {bad.tolist()} in layer {k + 1}")

    @property
    def num_cuts(self) -> int:
        return len(self.cuts)

    def initial_params(self) -> GcpParams:
        return GcpParams(default_alpha(self.bounds, self.L - 1), np.zeros(self.num_cuts))

    def evaluate(self, alpha, beta, split_sign=None, split_beta=None, grad=True, trace=False,
                 split_zbeta=None):
        """Bound ``g`` for a batch.

        ``alpha``: list of ``(B, d_i)``; ``beta``: ``(B, N)``; ``split_sign`` and
        ``split_beta``: optional lists of ``(B, d_i)`` (sign +1 means ``x >= 0``).
        ``split_zbeta`` optionally adds, per split neuron, the indicator cut
        ``z >= 1`` (sign +1) or ``z <= 0`` (sign -1); inside the split domain
        these remove no point of the projection onto ``(x, xhat)``.
        Returns ``(g, grads, extras)`` with ``grads = (galpha, gbeta, gsplit)``;
        ``gsplit`` holds the pre-activation gradients followed by the indicator ones.
        """
        net, L = self.net, self.L
        B = beta.shape[0]
        nu = [None] * (L + 1)
        nu[L] = -np.ones((B, 1))
        saved = [None] * L
        hsum = np.zeros(B)
        zconst = np.zeros(B)
        for i in range(L - 1, 0, -1):
            k = i - 1
            P, Ph, Z = self.blocks[k]
            a = nu[i + 1] @ net.weights(i + 1)
            bP = _rows(P, beta)
            scoef = None
            if split_sign is not None:
                scoef = -split_sign[k]
                bP = bP + scoef * split_beta[k]
            bPh = _rows(Ph, beta)
            bZ = _rows(Z, beta)
            zcoef = None
            if split_zbeta is not None:
                zcoef = -split_sign[k]
                bZ = bZ + zcoef * split_zbeta[k]
                zconst += (split_zbeta[k] * (split_sign[k] > 0)).sum(axis=1)
            l, u, w = self.lower[k], self.upper[k], self.width[k]
            unst = self.unstable[k]
            nuhat = a - bPh
            C = np.maximum(nuhat, 0.0)
            Nn = np.minimum(nuhat, 0.0)
            pi = np.clip((u * C - bZ) / w, 0.0, C)
            zero = bZ > u * C
            negq = bZ < l * C
            mid = ~zero & ~negq
            h = np.where(mid, l * pi, np.where(zero, 0.0, bZ))
            hsum += np.where(unst, h, 0.0).sum(axis=1)
            nu_unst = pi + alpha[k] * Nn - bP
            nu[i] = np.where(self.active[k], a - bP - bPh, np.where(self.inactive[k], -bP, nu_unst))
            saved[i] = (a, nuhat, C, Nn, pi, h, mid, zero, negq, scoef, zcoef)

        W1 = net.weights(1)
        x0, eps = self.box.center, self.box.eps
        wx = -nu[1] @ W1
        g = wx @ x0 - eps * np.abs(wx).sum(axis=1) + hsum
        for i in range(1, L + 1):
            g -= nu[i] @ net.biases(i)
        if self.num_cuts:
            g -= beta @ self.d
        g += zconst

        extras = {"input_coeffs": wx}
        if trace:
            extras["nu"] = nu[1:]
            extras["saved"] = saved
        if not grad:
            return g, None, extras

        galpha = [np.zeros((B, d)) for d in self.dims]
        gsplit = [np.zeros((B, d)) for d in self.dims] if split_sign is not None else None
        gzsplit = [np.zeros((B, d)) for d in self.dims] if split_zbeta is not None else None
        gbeta = np.zeros_like(beta) - self.d[None, :] if self.num_cuts else np.zeros_like(beta)
        gnu = [None] * (L + 1)
        gnu[1] = -(x0 - eps * np.sign(wx)) @ W1.T
        for i in range(1, L):
            k = i - 1
            gn = gnu[i] - net.biases(i)
            a, nuhat, C, Nn, pi, h, mid, zero, negq, scoef, zcoef = saved[i]
            P, Ph, Z = self.blocks[k]
            l, u, w = self.lower[k], self.upper[k], self.width[k]
            unst, act = self.unstable[k], self.active[k]
            alpha_k = alpha[k]

            dpi_dC = np.where(mid, u / w, np.where(negq, 1.0, 0.0))
            dpi_dZ = np.where(mid, -1.0 / w, 0.0)
            dh_dC = np.where(mid, l * u / w, 0.0)
            dh_dZ = np.where(mid, -l / w, np.where(negq, 1.0, 0.0))
            gC = gn * dpi_dC + dh_dC
            gZ = np.where(unst, gn * dpi_dZ + dh_dZ, 0.0)
            gN = gn * alpha_k
            gnuhat = np.where(nuhat >= 0, gC, gN)

            ga = np.where(act, gn, np.where(unst, gnuhat, 0.0))
            gbP = -gn
            gbPh = np.where(act, -gn, np.where(unst, -gnuhat, 0.0))
            galpha[k] = np.where(unst, gn * Nn, 0.0)

            gnu_next = ga @ net.weights(i + 1).T
            gnu[i + 1] = gnu_next if gnu[i + 1] is None else gnu[i + 1] + gnu_next
            if self.num_cuts:
                gbeta += _cols(P, gbP) + _cols(Ph, gbPh) + _cols(Z, gZ)
            if gsplit is not None:
                gsplit[k] = gbP * scoef
            if gzsplit is not None:
                gzsplit[k] = gZ * zcoef + (split_sign[k] > 0)
        if gzsplit is not None:
            gsplit = gsplit + gzsplit
        return g, (galpha, gbeta, gsplit), extras

    def trace_for(self, params: GcpParams) -> tuple[float, DualTrace]:
        alpha = [a[None, :] for a in params.alpha]
        g, _, ex = self.evaluate(alpha, params.beta[None, :], grad=False, trace=True)
        nus = [n[0] for n in ex["nu"]]
        nuhat_l, pi_l, gamma_l, h_l, br_l = [], [], [], [], []
        for i in range(1, self.L):
            a, nuhat, C, Nn, pi, h, mid, zero, negq, _, _ = ex["saved"][i]
            unst = self.unstable[i - 1]
            nan = np.full(unst.shape, np.nan)
            nuhat_l.append(np.where(unst, nuhat[0], nan))
            pi_l.append(np.where(unst, pi[0], nan))
            gamma_l.append(np.where(unst, C[0] - pi[0], nan))
            h_l.append(np.where(unst, h[0], nan))
            tags = {}
            for j in np.flatnonzero(unst):
                tags[int(j)] = MIDDLE if mid[0, j] else (ZERO if zero[0, j] else NEG_Q)
            br_l.append(tags)
        return float(g[0]), DualTrace(nus, nuhat_l, pi_l, gamma_l, h_l, br_l, ex["input_coeffs"][0])


def propagate(net: Network, box: InputBox, bounds: PreActBounds, status: NeuronStatus,
              cuts: CutSet, params: GcpParams) -> GcpBound:
    """Evaluate the cut-aware lower bound for one parameter setting."""
    prob = GcpProblem(net, box, bounds, status, cuts)
    if params.beta.shape[0] != prob.num_cuts:
        raise ValueError(f"{params.beta.shape[0]} multipliers for {prob.num_cuts} cuts")
    for a, d in zip(params.alpha, prob.dims):
        if a.shape != (d,):
            raise ValueError("alpha shapes do not match the ReLU layers")
    g, trace = prob.trace_for(params)
    return GcpBound(g, trace, params.copy())


class Adam:
    """Elementwise projected Adam ascent over a list of arrays."""

    def __init__(self, shapes, lrs, cfg: OptConfig):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.lrs, self.cfg, self.t = lrs, cfg, 0

    def step(self, params, grads):
        cfg = self.cfg
        self.t += 1
        decay = cfg.decay ** (self.t - 1)
        out = []
        for p, g, m, v, lr in zip(params, grads, self.m, self.v, self.lrs):
            m *= cfg.adam_b1
            m += (1 - cfg.adam_b1) * g
            v *= cfg.adam_b2
            v += (1 - cfg.adam_b2) * g * g
            mhat = m / (1 - cfg.adam_b1 ** self.t)
            vhat = v / (1 - cfg.adam_b2 ** self.t)
            out.append(p + lr * decay * mhat / (np.sqrt(vhat) + cfg.adam_eps))
        return out


def optimize_batch(prob: GcpProblem, alpha, beta, cfg: OptConfig, split_sign=None, split_beta=None,
                   split_zbeta=None):
    """Projected Adam ascent for a batch; returns best bound and the parameters achieving it.

    The split multipliers in the returned parameters are the pre-activation ones
    followed by the indicator ones when ``split_zbeta`` is given.
    """
    has_split = split_sign is not None
    nz = len(split_zbeta) if split_zbeta is not None else 0
    alpha = [np.clip(a, 0.0, 1.0) for a in alpha]
    beta = np.maximum(beta, 0.0)
    sbeta = [np.maximum(s, 0.0) for s in list(split_beta) + list(split_zbeta or [])] if has_split else []

    def run(al, be, sb, want):
        if not has_split:
            return prob.evaluate(al, be, grad=want)
        npre = len(sb) - nz
        return prob.evaluate(al, be, split_sign, sb[:npre], grad=want, split_zbeta=sb[npre:] if nz else None)

    nl = len(alpha)
    shapes = [a.shape for a in alpha] + [beta.shape] + [s.shape for s in sbeta]
    lrs = [cfg.lr_alpha] * nl + [cfg.lr_beta] * (1 + len(sbeta))
    opt = Adam(shapes, lrs, cfg)

    best_g = np.full(beta.shape[0], -np.inf)
    best = None
    history = []
    for it in range(cfg.iterations + 1):
        want_grad = it < cfg.iterations
        g, grads, extras = run(alpha, beta, sbeta, want_grad)
        history.append(g.copy())
        improved = g > best_g
        if best is None:
            best = ([a.copy() for a in alpha], beta.copy(), [s.copy() for s in sbeta], extras["input_coeffs"].copy())
        else:
            for a_best, a in zip(best[0], alpha):
                a_best[improved] = a[improved]
            best[1][improved] = beta[improved]
            for s_best, s in zip(best[2], sbeta):
                s_best[improved] = s[improved]
            best[3][improved] = extras["input_coeffs"][improved]
        best_g = np.where(improved, g, best_g)
        if not want_grad:
            break
        galpha, gbeta, gsplit = grads
        flat = alpha + [beta] + sbeta
        gflat = galpha + [gbeta] + (gsplit if has_split else [])
        new = opt.step(flat, gflat)
        alpha = [np.clip(a, 0.0, 1.0) for a in new[:nl]]
        beta = np.maximum(new[nl], 0.0)
        sbeta = [np.maximum(s, 0.0) for s in new[nl + 1:]]
    return best_g, best, history


def optimize(net: Network, box: InputBox, bounds: PreActBounds, status: NeuronStatus,
             cuts: CutSet, config: OptConfig | None = None, init: GcpParams | None = None) -> GcpBound:
    """Maximise the bound over (alpha, beta); returns the best iterate, not the last."""
    cfg = config or OptConfig()
    prob = GcpProblem(net, box, bounds, status, cuts)
    params = init.projected() if init is not None else prob.initial_params()
    alpha = [a[None, :] for a in params.alpha]
    best_g, best, history = optimize_batch(prob, alpha, params.beta[None, :], cfg)
    best_params = GcpParams([a[0] for a in best[0]], best[1][0])
    g, trace = prob.trace_for(best_params)
    running = np.maximum.accumulate([h[0] for h in history])
    return GcpBound(g, trace, best_params, list(running))


def _kink_distance(prob: GcpProblem, params: GcpParams) -> float:
    alpha = [a[None, :] for a in params.alpha]
    _, _, ex = prob.evaluate(alpha, params.beta[None, :], grad=False, trace=True)
    dist = [np.inf]
    for k in range(prob.L - 1):
        unst = prob.unstable[k]
        if not unst.any():
            continue
        dist.append(np.min(params.alpha[k][unst]))
        dist.append(np.min(1 - params.alpha[k][unst]))
        a, nuhat, C, Nn, pi, h, mid, zero, negq, _, _ = ex["saved"][k + 1]
        P, Ph, Z = prob.blocks[k]
        bZ = _rows(Z, params.beta[None, :])[0]
        l, u = prob.lower[k], prob.upper[k]
        dist.append(np.min(np.abs(nuhat[0][unst])))
        dist.append(np.min(np.abs(bZ - u * C[0])[unst]))
        dist.append(np.min(np.abs(bZ - l * C[0])[unst]))
    if prob.num_cuts:
        dist.append(np.min(params.beta))
    dist.append(np.min(np.abs(ex["input_coeffs"][0])))
    return float(min(dist))


def grad_check(net: Network, box: InputBox, bounds: PreActBounds, status: NeuronStatus,
               cuts: CutSet, params: GcpParams, h: float = 1e-5) -> float:
    """Compare analytic gradients with central differences.

    Returns ``max |analytic - numeric| / max(1, |analytic|, |numeric|)`` over
    every coordinate of alpha (unstable neurons) and beta.
    """
    prob = GcpProblem(net, box, bounds, status, cuts)
    if _kink_distance(prob, params) <= 10 * h:
        raise KinkError("parameters are within 10h of a non-differentiable point")
    alpha = [a[None, :].copy() for a in params.alpha]
    beta = params.beta[None, :].copy()
    _, (galpha, gbeta, _), _ = prob.evaluate(alpha, beta)

    def value(al, be):
        return prob.evaluate(al, be, grad=False)[0][0]

    worst = 0.0
    for k in range(prob.L - 1):
        for j in np.flatnonzero(prob.unstable[k]):
            up = [a.copy() for a in alpha]
            dn = [a.copy() for a in alpha]
            up[k][0, j] += h
            dn[k][0, j] -= h
            num = (value(up, beta) - value(dn, beta)) / (2 * h)
            ana = galpha[k][0, j]
            worst = max(worst, abs(ana - num) / max(1.0, abs(ana), abs(num)))
    for n in range(beta.shape[1]):
        up, dn = beta.copy(), beta.copy()
        up[0, n] += h
        dn[0, n] -= h
        num = (value(alpha, up) - value(alpha, dn)) / (2 * h)
        ana = gbeta[0, n]
        worst = max(worst, abs(ana - num) / max(1.0, abs(ana), abs(num)))
    return worst


def analytic_gradient(net, box, bounds, status, cuts, params: GcpParams):
    """Gradient of the bound w.r.t. (alpha per layer, beta) at ``params``."""
    prob = GcpProblem(net, box, bounds, status, cuts)
    _, (galpha, gbeta, _), _ = prob.evaluate([a[None, :] for a in params.alpha], params.beta[None, :])
    return [g[0] for g in galpha], gbeta[0]
