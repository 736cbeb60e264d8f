"""Cutting planes over pre-activation, post-activation and relaxed integer variables.

A cut is ``sum_i (P_i x_i + Ph_i xhat_i + Z_i z_i) <= d`` over the ReLU layers
``i = 1..L-1``.  Cuts are stored as sparse ``(layer, kind, neuron, coef)``
terms with 1-based layers and 0-based neurons.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

KINDS = ("pre", "post", "z")


class CutError(ValueError):
    pass


@dataclass(frozen=True)
class Cut:
    terms: tuple
    rhs: float

    def __post_init__(self):
        terms = []
        for t in self.terms:
            layer, kind, neuron, coef = t
            if kind not in KINDS:
                raise CutError(f"unknown variable kind {kind!r}")
            coef = float(coef)
            if not np.isfinite(coef):
                raise CutError("cut coefficients must be finite")
            terms.append((int(layer), kind, int(neuron), coef))
        if not terms:
            raise CutError("a cut needs at least one term")
        if not np.isfinite(self.rhs):
            raise CutError("cut rhs must be finite")
        object.__setattr__(self, "terms", tuple(terms))
        object.__setattr__(self, "rhs", float(self.rhs))

    @property
    def layers(self) -> set:
        return {t[0] for t in self.terms if t[3] != 0.0}

    def is_zero(self) -> bool:
        return all(t[3] == 0.0 for t in self.terms)

    def to_json(self) -> dict:
        return {"terms": [{"layer": l, "kind": k, "neuron": j, "coef": c} for l, k, j, c in self.terms],
                "rhs": self.rhs}


@dataclass(frozen=True)
class CutSet:
    cuts: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "cuts", tuple(self.cuts))

    def __len__(self):
        return len(self.cuts)

    def __iter__(self):
        return iter(self.cuts)

    def __add__(self, other: "CutSet") -> "CutSet":
        return CutSet(self.cuts + tuple(other.cuts))

    @cached_property
    def rhs(self) -> np.ndarray:
        return np.array([c.rhs for c in self.cuts], dtype=np.float64)

    def check_dims(self, hidden_dims: Sequence[int]) -> None:
        for k, cut in enumerate(self.cuts):
            for layer, kind, neuron, _ in cut.terms:
                if not 1 <= layer <= len(hidden_dims):
                    raise CutError(f"cut {k}: layer {layer} is not a ReLU layer (1..{len(hidden_dims)})")
                if not 0 <= neuron < hidden_dims[layer - 1]:
                    raise CutError(f"cut {k}: neuron {neuron} out of range for layer {layer}")

    def blocks(self, hidden_dims: Sequence[int]) -> list:
        """Sparse ``(P, Ph, Z)`` matrices, each ``N x d_i``, for every ReLU layer."""
        key = tuple(hidden_dims)
        cache = self.__dict__.setdefault("_blocks", {})
        if key not in cache:
            self.check_dims(hidden_dims)
            n = len(self.cuts)
            entries = {(i, kind): ([], [], []) for i in range(1, len(key) + 1) for kind in KINDS}
            for row, cut in enumerate(self.cuts):
                for layer, kind, neuron, coef in cut.terms:
                    r, c, v = entries[(layer, kind)]
                    r.append(row)
                    c.append(neuron)
                    v.append(coef)
            out = []
            for i, d in enumerate(key, start=1):
                mats = []
                for kind in KINDS:
                    r, c, v = entries[(i, kind)]
                    mats.append(sp.csr_matrix((v, (r, c)), shape=(n, d)))
                out.append(tuple(mats))
            cache[key] = out
        return cache[key]

    def dense(self, hidden_dims: Sequence[int]):
        """Dense ``[(P, Ph, Z)]`` per layer and the rhs vector ``d``."""
        return [tuple(m.toarray() for m in layer) for layer in self.blocks(hidden_dims)], self.rhs


def splits_to_cuts(splits: Iterable) -> CutSet:
    """Encode neuron splits as cuts on pre-activations.

    ``sign=+1`` is the branch ``x >= 0`` (cut ``-x <= 0``), ``sign=-1`` is
    ``x <= 0`` (cut ``x <= 0``).
    """
    seen = set()
    cuts = []
    for layer, neuron, sign in splits:
        if (layer, neuron) in seen:
            raise CutError(f"duplicate split on neuron ({layer}, {neuron})")
        if sign not in (1, -1):
            raise CutError(f"split sign must be +1 or -1, got {sign!r}")
        seen.add((layer, neuron))
        cuts.append(Cut(((layer, "pre", neuron, -1.0 if sign > 0 else 1.0),), 0.0))
    return CutSet(tuple(cuts))


class CutPool:
    """Append-only cut store shared between a cut producer and bound readers."""

    def __init__(self, check=None):
        self._cuts: list = []
        self._lock = threading.Lock()
        self._check = check

    @property
    def version(self) -> int:
        with self._lock:
            return len(self._cuts)

    def append(self, cuts: Iterable[Cut]) -> int:
        cuts = list(cuts)
        if self._check is not None:
            for cut in cuts:
                if not self._check(cut):
                    raise CutError("refusing to add a cut that failed validation")
        with self._lock:
            self._cuts.extend(cuts)
            return len(self._cuts)

    def snapshot(self) -> tuple[int, CutSet]:
        with self._lock:
            return len(self._cuts), CutSet(tuple(self._cuts))


def pool_append(pool: CutPool, cuts) -> int:
    return pool.append(cuts)


def pool_snapshot(pool: CutPool) -> tuple[int, CutSet]:
    return pool.snapshot()


def cuts_from_json(data, num_layers: int | None = None) -> CutSet:
    if not isinstance(data, list):
        raise CutError("cut file must hold a JSON array")
    cuts = []
    for k, entry in enumerate(data):
        try:
            terms = []
            for t in entry["terms"]:
                layer = int(t["layer"])
                if layer < 1 or (num_layers is not None and layer >= num_layers):
                    raise CutError(f"layer {layer} is not a ReLU layer")
                terms.append((layer, t["kind"], int(t["neuron"]), float(t["coef"])))
            cuts.append(Cut(tuple(terms), float(entry["rhs"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise CutError(f"cut entry {k}: {exc}") from exc
    return CutSet(tuple(cuts))


def read_cuts(path, num_layers: int | None = None) -> CutSet:
    """Load a cut file; ``num_layers`` (L) rejects references to layers >= L."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CutError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return cuts_from_json(data, num_layers)


def write_cuts(path, cuts: CutSet) -> None:
    Path(path).write_text(json.dumps([c.to_json() for c in cuts], indent=1), encoding="utf-8")
