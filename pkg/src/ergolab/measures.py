"""Probability measures represented by integrals against a fixed test family.

A measure mu on T^d (d = 2, 3) is represented by the finite vector of its
integrals against the truncated trigonometric family

    phi_0 = 1,  then cos/sin(2 pi k . x) for integer frequencies 0 < |k|_inf <= max_norm,

one representative per +-k pair (first nonzero component positive), ordered by
|k|_inf shell then lexicographically, cosine before sine.  The distance

    d(mu, nu) = sum_n |mu_n - nu_n| / 2^n          (sup|phi_n| = 1 for all n)

is a metric on represented vectors and a truncated proxy of the weak-*
distance built from a countable dense family.  The family enumeration is
deterministic and is serialized into experiment manifests, because every
threshold downstream is calibrated against this exact truncation.

Empirical measures of orbits are accumulated with Kahan compensated sums so
that 1e8-step averages carry no fl.p. drift beyond relative 1e-12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "TestFamily",
    "MeasureVector",
    "EmpiricalAccumulator",
    "weak_star_distance",
    "reference_measure",
    "accumulate",
    "distance_to_segment",
]


@dataclass(frozen=True)
class TestFamily:
    """Deterministic truncated test-function family on T^dimension."""

    dimension: int
    max_norm: int = 2

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if not (1 <= int(self.max_norm) <= 8):
            raise ValueError("max_norm must be a small positive integer")
        object.__setattr__(self, "max_norm", int(self.max_norm))

    @cached_property
    def canonical_frequencies(self) -> tuple:
        """Nonzero frequency vectors, one per +-k pair, in enumeration order."""
        rng = range(-self.max_norm, self.max_norm + 1)
        out = []
        if self.dimension == 2:
            candidates = [(i, j) for i in rng for j in rng]
        else:
            candidates = [(i, j, l) for i in rng for j in rng for l in rng]
        for k in candidates:
            if all(v == 0 for v in k):
                continue
            first = next(v for v in k if v != 0)
            if first < 0:
                continue  # the negative twin represents the same cos/sin pair
            out.append(k)
        out.sort(key=lambda k: (max(abs(v) for v in k), k))
        return tuple(out)

    @cached_property
    def entries(self) -> tuple:
        """((frequency, kind), ...) with the constant function first."""
        items = [((0,) * self.dimension, "const")]
        for k in self.canonical_frequencies:
            items.append((k, "cos"))
            items.append((k, "sin"))
        return tuple(items)

    @property
    def size(self) -> int:
        return len(self.entries)

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.power(2.0, -np.arange(self.size, dtype=float))
        w.flags.writeable = False
        return w

    @cached_property
    def frequency_array(self) -> np.ndarray:
        k = np.array(self.canonical_frequencies, dtype=np.int64)
        k.flags.writeable = False
        return k

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Evaluate every entry at every point: (m, d) -> (m, size).

        Uses complex exponentials: each entry pair cos/sin(2 pi k . x) is the
        real/imaginary part of prod_j z_j^{k_j} with z_j = e^{2 pi i x_j}.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.dimension:
            raise ValueError(f"points have dimension {points.shape[1]}, family needs {self.dimension}")
        m = points.shape[0]
        z = np.exp(2j * math.pi * points)  # (m, d)
        # power tables per coordinate: pow_tab[j][p] = z_j^p, p = 0..max_norm
        pow_tab = []
        for j in range(self.dimension):
            tab = [np.ones(m, dtype=complex)]
            for _ in range(self.max_norm):
                tab.append(tab[-1] * z[:, j])
            pow_tab.append(tab)
        out = np.empty((m, self.size))
        out[:, 0] = 1.0
        for i, k in enumerate(self.canonical_frequencies):
            w = None
            for j, p in enumerate(k):
                if p == 0:
                    continue
                factor = pow_tab[j][abs(p)]
                if p < 0:
                    factor = np.conj(factor)
                w = factor if w is None else w * factor
            out[:, 1 + 2 * i] = w.real
            out[:, 2 + 2 * i] = w.imag
        return out

    @cached_property
    def _entry_index(self) -> dict:
        return {e: i for i, e in enumerate(self.entries)}

    def index_of(self, frequency: tuple, kind: str) -> int:
        """Index of an entry; raises KeyError for non-canonical frequencies."""
        return self._entry_index[(tuple(frequency), kind)]

    def base_projection(self, family2: "TestFamily") -> np.ndarray:
        """Indices mapping a 2D family's entries into this 3D family.

        Entry (k1, k2) of the 2D family corresponds to ((k1, k2, 0), kind)
        here; the base marginal of a represented measure on T^3 is read off
        by gathering these indices.
        """
        if self.dimension != 3 or family2.dimension != 2:
            raise ValueError("base_projection maps a 2D family into a 3D one")
        if family2.max_norm > self.max_norm:
            raise ValueError("2D family is finer than the 3D family")
        idx = np.empty(family2.size, dtype=np.int64)
        for i, (k, kind) in enumerate(family2.entries):
            if kind == "const":
                idx[i] = 0
            else:
                idx[i] = self.index_of((k[0], k[1], 0), kind)
        return idx

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "max_norm": self.max_norm,
            "entries": [[list(k), kind] for k, kind in self.entries],
        }


@dataclass(frozen=True)
class MeasureVector:
    """Integrals of one probability measure against a TestFamily."""

    family: TestFamily
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).copy()
        if v.shape != (self.family.size,):
            raise ValueError(f"expected {self.family.size} integrals, got shape {v.shape}")
        if abs(v[0] - 1.0) > 1e-9:
            raise ValueError(f"first integral must be 1 (probability), got {v[0]!r}")
        if np.max(np.abs(v)) > 1.0 + 1e-9:
            raise ValueError("integrals of sup-norm-1 test functions cannot exceed 1")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def mix(self, other: "MeasureVector", lam: float) -> "MeasureVector":
        """Convex combination lam*self + (1-lam)*other (representation is linear)."""
        _same_family(self, other)
        if not (0.0 <= lam <= 1.0):
            raise ValueError("lam must lie in [0, 1]")
        return MeasureVector(self.family, lam * self.values + (1.0 - lam) * other.values)

    def integral(self, frequency: tuple, kind: str) -> float:
        return float(self.values[self.family.index_of(frequency, kind)])


def _same_family(mu: MeasureVector, nu: MeasureVector):
    if mu.family != nu.family:
        raise ValueError("measure vectors belong to different test families")


def weak_star_distance(mu: MeasureVector, nu: MeasureVector) -> float:
    """Weighted l1 distance sum_n |mu_n - nu_n| / 2^n over the family."""
    _same_family(mu, nu)
    return math.fsum(np.abs(mu.values - nu.values) * mu.family.weights)


def reference_measure(family: TestFamily, which: str) -> MeasureVector:
    """Closed-form vectors of the reference measures.

    ``volume``: Lebesgue on T^d -- every non-constant trigonometric integral
    vanishes.  ``nu1``/``nu2``: volume on the base times the Dirac mass at
    fiber height 0 resp. 1/2 -- integrals vanish unless the base frequency is
    zero, where they equal cos/sin(2 pi l tau) with tau in {0, 1/2}, i.e.
    +-1 for cosines and 0 for sines.
    """
    values = np.zeros(family.size)
    values[0] = 1.0
    if which == "volume":
        return MeasureVector(family, values)
    if which not in ("nu1", "nu2"):
        raise ValueError(f"unknown reference measure {which!r}")
    if family.dimension != 3:
        raise ValueError("nu1/nu2 live on T^3; use a 3-dimensional family")
    for i, k in enumerate(family.canonical_frequencies):
        if k[0] == 0 and k[1] == 0:
            l = k[2]  # canonical, so l > 0; sin(2 pi l tau) = 0 at both heights
            values[1 + 2 * i] = 1.0 if which == "nu1" else float((-1) ** (l % 2))
    return MeasureVector(family, values)


class EmpiricalAccumulator:
    """Streaming empirical measure (1/n) sum_i delta_{p_i} of an orbit.

    Mutable, single-owner.  Uses Kahan compensated summation per entry; two
    accumulators over the same family can be merged by summing their sums.
    """

    def __init__(self, family: TestFamily):
        self.family = family
        self.n = 0
        self._sums = np.zeros(family.size)
        self._comp = np.zeros(family.size)

    def _kahan_add(self, row: np.ndarray):
        y = row - self._comp
        t = self._sums + y
        self._comp = (t - self._sums) - y
        self._sums = t

    def add(self, p) -> "EmpiricalAccumulator":
        """Accumulate one point (TorusPoint or coordinate sequence)."""
        coords = p.as_array() if hasattr(p, "as_array") else np.asarray(p, dtype=float)
        row = self.family.evaluate(coords.reshape(1, -1))[0]
        self._kahan_add(row)
        self.n += 1
        return self

    def add_points(self, points: np.ndarray) -> "EmpiricalAccumulator":
        """Accumulate rows of an (m, d) array, in row order."""
        rows = self.family.evaluate(points)
        for row in rows:
            self._kahan_add(row)
        self.n += rows.shape[0]
        return self

    def merge(self, other: "EmpiricalAccumulator") -> "EmpiricalAccumulator":
        if self.family != other.family:
            raise ValueError("cannot merge accumulators over different families")
        self._kahan_add(other._sums)
        self._kahan_add(other._comp)
        self.n += other.n
        return self

    @staticmethod
    def from_sums(family: TestFamily, n: int, sums: np.ndarray) -> "EmpiricalAccumulator":
        """Wrap raw per-entry sums produced by a compiled orbit kernel."""
        acc = EmpiricalAccumulator(family)
        acc.n = int(n)
        acc._sums = np.asarray(sums, dtype=float).copy()
        return acc

    def finalize(self) -> MeasureVector:
        if self.n == 0:
            raise ValueError("cannot finalize an empty accumulator")
        return MeasureVector(self.family, self._sums / self.n)


def accumulate(acc: EmpiricalAccumulator, p) -> EmpiricalAccumulator:
    """Functional alias for ``acc.add(p)``."""
    return acc.add(p)


def distance_to_segment(mu: MeasureVector, a: MeasureVector, b: MeasureVector,
                        tol: float = 1e-6) -> float:
    """min over lam in [0,1] of d(mu, lam*a + (1-lam)*b).

    The objective is convex in lam (weighted l1 of an affine path), so a
    ternary search converges; ``tol`` bounds the lam bracket, not the value.
    """
    _same_family(mu, a)
    _same_family(mu, b)
    w = mu.family.weights

    def g(lam: float) -> float:
        return math.fsum(np.abs(mu.values - (lam * a.values + (1.0 - lam) * b.values)) * w)

    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if g(m1) <= g(m2):
            hi = m2
        else:
            lo = m1
    mid = 0.5 * (lo + hi)
    return min(g(lo), g(mid), g(hi))
