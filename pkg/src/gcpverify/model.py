"""Feed-forward ReLU networks, input boxes and linear output specifications."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class ProblemError(ValueError):
    """Raised for malformed problem files or inconsistent dimensions."""


@dataclass(frozen=True)
class AffineLayer:
    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float64, ndmin=2)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 2:
            raise ProblemError(f"weight must be a matrix, got shape {w.shape}")
        if w.shape[0] != b.shape[0]:
            raise ProblemError(
                f"weight has {w.shape[0]} rows but bias has length {b.shape[0]}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ProblemError("layer entries must be finite")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True)
class Network:
    """Affine layers with a ReLU between consecutive layers (none after the last)."""

    layers: tuple
    input_dim: int

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ProblemError("network needs at least one layer")
        if self.input_dim <= 0:
            raise ProblemError("input_dim must be positive")
        prev = self.input_dim
        for k, layer in enumerate(layers, start=1):
            if layer.in_dim != prev:
                raise ProblemError(
                    f"dimension mismatch at layer {k}: expects input of size "
                    f"{layer.in_dim}, previous layer provides {prev}")
            prev = layer.out_dim
        object.__setattr__(self, "layers", layers)

    @classmethod
    def from_arrays(cls, weights: Sequence, biases: Sequence) -> "Network":
        layers = [AffineLayer(w, b) for w, b in zip(weights, biases)]
        if not layers:
            raise ProblemError("network needs at least one layer")
        return cls(tuple(layers), layers[0].in_dim)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def hidden_dims(self) -> list[int]:
        """Widths of the ReLU layers 1..L-1."""
        return [layer.out_dim for layer in self.layers[:-1]]

    def weights(self, i: int) -> np.ndarray:
        """Weight of layer ``i`` using 1-based indexing."""
        return self.layers[i - 1].weight

    def biases(self, i: int) -> np.ndarray:
        return self.layers[i - 1].bias


@dataclass(frozen=True)
class InputBox:
    """The l-infinity ball ``{x : |x - center|_inf <= eps}``."""

    center: np.ndarray
    eps: float

    def __post_init__(self):
        c = np.array(self.center, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(c)):
            raise ProblemError("input center must be finite")
        eps = float(self.eps)
        if not np.isfinite(eps) or eps < 0:
            raise ProblemError(f"eps must be a finite non-negative number, got {eps}")
        c.flags.writeable = False
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "eps", eps)

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.eps

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.eps

    def clamp(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=np.float64), self.lower, self.upper)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(np.abs(x - self.center) <= self.eps + tol))


@dataclass(frozen=True)
class Spec:
    """Linear property ``coeffs . f(x) + offset`` that must stay non-negative."""

    coeffs: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.float64).reshape(-1)
        if c.size == 0 or not np.any(c != 0):
            raise ProblemError("spec needs at least one nonzero coefficient")
        if not np.all(np.isfinite(c)) or not np.isfinite(self.offset):
            raise ProblemError("spec entries must be finite")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "offset", float(self.offset))


def canonicalize(net: Network, spec: Spec) -> Network:
    """Fold the specification into the last affine layer so the output is scalar."""
    if spec.coeffs.shape[0] != net.output_dim:
        raise ProblemError(
            f"spec has {spec.coeffs.shape[0]} coefficients but the network has "
            f"{net.output_dim} outputs")
    last = net.layers[-1]
    w = spec.coeffs[None, :] @ last.weight
    b = np.array([spec.coeffs @ last.bias + spec.offset])
    return Network(net.layers[:-1] + (AffineLayer(w, b),), net.input_dim)


def forward_all(net: Network, x) -> list[np.ndarray]:
    """Pre-activations of every layer; the last entry is the raw network output."""
    h = np.asarray(x, dtype=np.float64)
    if h.shape[-1] != net.input_dim:
        raise ProblemError(f"input has size {h.shape[-1]}, network expects {net.input_dim}")
    pre = []
    for k, layer in enumerate(net.layers):
        z = h @ layer.weight.T + layer.bias
        pre.append(z)
        if k + 1 < len(net.layers):
            h = np.maximum(z, 0.0)
    return pre


def forward(net: Network, x):
    """Concrete output of a canonical network.

    Accepts a single input vector (returns a float) or a batch of shape
    ``(n, input_dim)`` (returns an array of n values).
    """
    out = forward_all(net, x)[-1]
    if out.shape[-1] != 1:
        raise ProblemError("forward expects a canonical (scalar-output) network")
    out = out[..., 0]
    return float(out) if out.ndim == 0 else out


def _parse_layers(raw) -> list[AffineLayer]:
    if not isinstance(raw, list) or not raw:
        raise ProblemError("'layers' must be a non-empty list")
    layers = []
    for k, entry in enumerate(raw, start=1):
        try:
            layers.append(AffineLayer(entry["weight"], entry["bias"]))
        except (KeyError, TypeError) as exc:
            raise ProblemError(f"layer {k}: expected 'weight' and 'bias' ({exc})") from exc
        except ValueError as exc:
            raise ProblemError(f"layer {k}: {exc}") from exc
    return layers


def parse_problem(data: dict) -> tuple[Network, InputBox, Spec]:
    layers = _parse_layers(data.get("layers"))
    net = Network(tuple(layers), layers[0].in_dim)
    try:
        box = InputBox(data["input"]["center"], data["input"]["eps"])
    except (KeyError, TypeError) as exc:
        raise ProblemError(f"'input' needs 'center' and 'eps' ({exc})") from exc
    if box.center.shape[0] != net.input_dim:
        raise ProblemError(
            f"input center has size {box.center.shape[0]}, layer 1 expects {net.input_dim}")
    spec_raw = data.get("spec", {"coeffs": [1.0] * net.output_dim, "offset": 0.0})
    try:
        spec = Spec(spec_raw["coeffs"], spec_raw.get("offset", 0.0))
    except (KeyError, TypeError) as exc:
        raise ProblemError(f"'spec' needs 'coeffs' ({exc})") from exc
    if spec.coeffs.shape[0] != net.output_dim:
        raise ProblemError(
            f"spec has {spec.coeffs.shape[0]} coefficients, network has {net.output_dim} outputs")
    return net, box, spec


def load_problem(path) -> tuple[Network, InputBox, Spec]:
    """Read a JSON problem file (layers, input box, spec)."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if exc.lineno - 1 < len(text.splitlines()) else ""
        raise ProblemError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n  {line}") from exc
    if not isinstance(data, dict):
        raise ProblemError(f"{path}: top-level JSON value must be an object")
    return parse_problem(data)


def problem_to_dict(net: Network, box: InputBox, spec: Spec) -> dict:
    return {
        "layers": [{"weight": l.weight.tolist(), "bias": l.bias.tolist()} for l in net.layers],
        "input": {"center": box.center.tolist(), "eps": box.eps},
        "spec": {"coeffs": spec.coeffs.tolist(), "offset": spec.offset},
    }


def save_problem(path, net: Network, box: InputBox, spec: Spec) -> None:
    Path(path).write_text(json.dumps(problem_to_dict(net, box, spec), indent=1), encoding="utf-8")
