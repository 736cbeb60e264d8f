"""Seeded generators for tiny verification problems used in tests and benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import AffineLayer, InputBox, Network, Spec, canonicalize, forward


@dataclass
class Instance:
    net: Network          # canonical (scalar output)
    box: InputBox
    raw: Network
    spec: Spec
    seed: int


def random_network(rng: np.random.Generator, widths) -> Network:
    layers = []
    for d_in, d_out in zip(widths[:-1], widths[1:]):
        w = rng.normal(size=(d_out, d_in)) / np.sqrt(d_in)
        b = rng.normal(scale=0.3, size=d_out)
        layers.append(AffineLayer(w, b))
    return Network(tuple(layers), widths[0])


def random_instance(seed: int, n_layers=(2, 4), width=(2, 6), input_dim=(2, 3),
                    eps=(0.2, 0.8), margin=(-0.05, 0.2), out_dim: int = 2) -> Instance:
    """Random net with ``n_layers`` affine layers and a difference-of-logits spec.

    The spec offset puts the smallest of 256 sampled outputs at a random
    fraction (``margin``) of the sampled spread, so most properties sit close
    to the verified/falsified boundary.
    """
    rng = np.random.default_rng(seed)
    L = int(rng.integers(n_layers[0], n_layers[1] + 1))
    d0 = int(rng.integers(input_dim[0], input_dim[1] + 1))
    hidden = [int(rng.integers(width[0], width[1] + 1)) for _ in range(L - 1)]
    raw = random_network(rng, [d0] + hidden + [out_dim])
    center = rng.uniform(-1, 1, size=d0)
    box = InputBox(center, float(rng.uniform(*eps)))
    coeffs = np.zeros(out_dim)
    coeffs[0], coeffs[-1] = 1.0, -1.0
    if out_dim == 1:
        coeffs[0] = 1.0
    base = canonicalize(raw, Spec(coeffs, 0.0))
    samples = box.center + box.eps * rng.uniform(-1, 1, size=(256, d0))
    vals = forward(base, samples)
    spread = float(vals.max() - vals.min()) + 1e-3
    target = float(rng.uniform(*margin)) * spread
    spec = Spec(coeffs, target - float(vals.min()))
    return Instance(canonicalize(raw, spec), box, raw, spec, seed)
