"""Interval and CROWN-style linear bound propagation.

Bounds are kept for every affine layer, including the output layer, so
``bounds.lower[i - 1]`` bounds the pre-activation ``x^(i)`` for ``i = 1..L``.
Only the first ``L - 1`` entries (the ReLU layers) are used by the relaxations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import InputBox, Network

ACTIVE = 1
INACTIVE = -1
UNSTABLE = 0

# below this width an unstable neuron is classified by the sign of its midpoint
MIN_WIDTH = 1e-12


@dataclass(frozen=True)
class PreActBounds:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(np.asarray(l, dtype=np.float64) for l in self.lower))
        object.__setattr__(self, "upper", tuple(np.asarray(u, dtype=np.float64) for u in self.upper))

    def layer(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.lower[i - 1], self.upper[i - 1]

    @property
    def output(self) -> tuple[float, float]:
        return float(self.lower[-1][0]), float(self.upper[-1][0])


@dataclass(frozen=True)
class NeuronStatus:
    """Per ReLU layer codes: 1 active, -1 inactive, 0 unstable."""

    codes: tuple

    def active(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.codes[i - 1] == ACTIVE)

    def inactive(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.codes[i - 1] == INACTIVE)

    def unstable(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.codes[i - 1] == UNSTABLE)

    def unstable_neurons(self) -> list[tuple[int, int]]:
        """All unstable (layer, neuron) pairs with 1-based layers."""
        return [(i + 1, int(j)) for i, c in enumerate(self.codes) for j in np.flatnonzero(c == UNSTABLE)]

    @property
    def num_unstable(self) -> int:
        return int(sum(np.count_nonzero(c == UNSTABLE) for c in self.codes))


@dataclass(frozen=True)
class LinearBound:
    """``a . x + c`` lower-bounding the objective over the input box."""

    a: np.ndarray
    c: float


def classify(lower, upper) -> np.ndarray:
    l = np.asarray(lower, dtype=np.float64)
    u = np.asarray(upper, dtype=np.float64)
    codes = np.zeros(l.shape, dtype=np.int8)
    codes[u <= 0] = INACTIVE
    codes[l >= 0] = ACTIVE
    thin = (codes == UNSTABLE) & (u - l < MIN_WIDTH)
    codes[thin & (l + u >= 0)] = ACTIVE
    codes[thin & (l + u < 0)] = INACTIVE
    return codes


def status_from_bounds(net: Network, bounds: PreActBounds) -> NeuronStatus:
    return NeuronStatus(tuple(classify(bounds.lower[k], bounds.upper[k])
                              for k in range(net.num_layers - 1)))


def concretize(lb: LinearBound, box: InputBox):
    """Exact minimum of ``a . x + c`` over the box (rows of ``a`` handled independently)."""
    a = np.asarray(lb.a, dtype=np.float64)
    return a @ box.center - box.eps * np.abs(a).sum(axis=-1) + lb.c


def _interval_affine(layer, lo, hi):
    mid = (hi + lo) / 2
    rad = (hi - lo) / 2
    center = layer.weight @ mid + layer.bias
    spread = np.abs(layer.weight) @ rad
    return center - spread, center + spread


def ibp(net: Network, box: InputBox) -> PreActBounds:
    lows, highs = [], []
    lo, hi = box.lower, box.upper
    for k, layer in enumerate(net.layers):
        l, u = _interval_affine(layer, lo, hi)
        lows.append(l)
        highs.append(u)
        lo, hi = np.maximum(l, 0), np.maximum(u, 0)
    return PreActBounds(lows, highs)


def default_alpha(bounds: PreActBounds, num_hidden: int) -> list[np.ndarray]:
    """Lower-relaxation slope 1 where u >= -l, else 0."""
    return [(bounds.upper[k] >= -bounds.lower[k]).astype(np.float64) for k in range(num_hidden)]


def _relax_coefficients(lam, l, u, codes, alpha):
    """Push coefficients over post-activations to pre-activations; returns (new lam, const)."""
    out = np.where(codes == INACTIVE, 0.0, lam)
    unst = codes == UNSTABLE
    if not np.any(unst):
        return out, np.zeros(lam.shape[0])
    width = np.where(unst, u - l, 1.0)
    slope = np.where(unst, u / width, 0.0)
    pos = lam >= 0
    relaxed = np.where(pos, lam * alpha, lam * slope)
    out = np.where(unst, relaxed, out)
    shift = np.where(unst & ~pos, -lam * slope * l, 0.0)
    return out, shift.sum(axis=1)


def backward_bound(net, bounds, codes, alpha, layer: int, coeffs) -> LinearBound:
    """Linear lower bound (at the input) of ``coeffs @ x^(layer)``.

    ``coeffs`` is an ``(m, d_layer)`` matrix; the result holds ``m`` rows.
    """
    lam = np.array(coeffs, dtype=np.float64, ndmin=2)
    const = np.zeros(lam.shape[0])
    for i in range(layer, 0, -1):
        W, b = net.weights(i), net.biases(i)
        const = const + lam @ b
        lam = lam @ W
        if i - 1 >= 1:
            k = i - 2
            lam, shift = _relax_coefficients(lam, bounds.lower[k], bounds.upper[k], codes[k], alpha[k])
            const = const + shift
    return LinearBound(lam, const)


def crown_lower(net: Network, box: InputBox, bounds: PreActBounds, status: NeuronStatus,
                alpha=None) -> tuple[float, LinearBound]:
    """CROWN lower bound on the scalar output for the given lower-relaxation slopes."""
    hidden = net.num_layers - 1
    if alpha is None:
        alpha = default_alpha(bounds, hidden)
    alpha = [np.clip(np.asarray(a, dtype=np.float64), 0.0, 1.0) for a in alpha]
    lb = backward_bound(net, bounds, status.codes, alpha, net.num_layers, [[1.0]])
    lb = LinearBound(lb.a[0], float(lb.c[0]))
    return float(concretize(lb, box)), lb


def intermediate_bounds(net: Network, box: InputBox, method: str = "crown"):
    """Layer-by-layer pre-activation bounds and the resulting neuron status.

    The CROWN variant intersects with interval bounds, so it is never looser.
    """
    if method not in ("ibp", "crown"):
        raise ValueError(f"unknown bound method {method!r}")
    plain = ibp(net, box)
    if method == "ibp":
        return plain, status_from_bounds(net, plain)
    lows, highs, codes, alphas = [], [], [], []
    for i in range(1, net.num_layers + 1):
        d = net.layers[i - 1].out_dim
        if i == 1:
            l, u = plain.lower[0].copy(), plain.upper[0].copy()
        else:
            partial = PreActBounds(lows, highs)
            eye = np.eye(d)
            lo_b = backward_bound(net, partial, codes, alphas, i, eye)
            up_b = backward_bound(net, partial, codes, alphas, i, -eye)
            l = concretize(lo_b, box)
            u = -concretize(up_b, box)
            prev_lo, prev_hi = np.maximum(lows[-1], 0), np.maximum(highs[-1], 0)
            il, iu = _interval_affine(net.layers[i - 1], prev_lo, prev_hi)
            l = np.maximum(np.maximum(l, il), plain.lower[i - 1])
            u = np.minimum(np.minimum(u, iu), plain.upper[i - 1])
            u = np.maximum(u, l)
        lows.append(l)
        highs.append(u)
        if i < net.num_layers:
            codes.append(classify(l, u))
            alphas.append((u >= -l).astype(np.float64))
    bounds = PreActBounds(lows, highs)
    return bounds, NeuronStatus(tuple(codes))
