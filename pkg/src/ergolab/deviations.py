"""Large-deviation ensembles: volume of deviant and convergent sets, rate fits.

The Lebesgue measure of {x : the n-step average of phi deviates from its
limit set by >= epsilon} is estimated by the fraction of an initial-condition
ensemble (deterministic grid by default) landing in the set, and the decay in
n is fitted to log(fraction) = log a - b n.

Fiber coordinates are advanced in the log-tangent chart a = log tan(pi u),
where one step is a constant shift by 2 pi c phi(x) (skew systems) or by
-2 pi kappa (the contracting control system), so whole ensembles iterate as
plain array arithmetic with no per-member transcendental state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .measures import MeasureVector, TestFamily
from .rng import stream
from .torus_maps import Observable, SystemSpec

__all__ = [
    "EnsembleSpec",
    "RateFit",
    "DeviationCurve",
    "ConvergenceCurve",
    "sample_points",
    "deviant_fraction",
    "convergent_fraction",
    "target_interval",
    "fit_rate",
]

_SAMPLINGS = ("grid", "uniform_random", "unstable_segment")
_RNG_CHUNK = 1 << 16


@dataclass(frozen=True)
class EnsembleSpec:
    """How to draw initial conditions.

    grid: count = g^dim half-offset lattice points over the region box.
    uniform_random: count iid uniform points in the region box (seeded).
    unstable_segment: count evenly spaced points on a segment of the given
    length through ``base`` along the unit unstable eigenvector (a
    one-dimensional disc tangent to the unstable cone); in three dimensions
    the segment keeps the fiber coordinate of ``base``.
    """

    sampling: str
    count: int
    dimension: int = 2
    base: tuple = ()
    extent: tuple = ()
    length: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.sampling not in _SAMPLINGS:
            raise ValueError(f"sampling must be one of {_SAMPLINGS}, got {self.sampling!r}")
        if self.count < 1:
            raise ValueError("count must be positive")
        if self.dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        base = tuple(float(v) for v in (self.base or (0.0,) * self.dimension))
        extent = tuple(float(v) for v in (self.extent or (1.0,) * self.dimension))
        if len(base) != self.dimension or len(extent) != self.dimension:
            raise ValueError("base and extent must match the dimension")
        if self.sampling == "grid":
            g = round(self.count ** (1.0 / self.dimension))
            if g ** self.dimension != self.count:
                raise ValueError(
                    f"grid sampling needs count = k**{self.dimension}"
                    f" for integer k, got {self.count}")
        if self.sampling == "unstable_segment" and not (0.0 < self.length <= 1.0):
            raise ValueError("segment length must lie in (0, 1]")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "extent", extent)

    def to_dict(self) -> dict:
        return {
            "sampling": self.sampling,
            "count": self.count,
            "dimension": self.dimension,
            "base": list(self.base),
            "extent": list(self.extent),
            "length": self.length,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "EnsembleSpec":
        return EnsembleSpec(sampling=d["sampling"], count=int(d["count"]),
                            dimension=int(d.get("dimension", 2)),
                            base=tuple(d.get("base") or ()),
                            extent=tuple(d.get("extent") or ()),
                            length=float(d.get("length", 0.1)),
                            seed=int(d.get("seed", 0)))


def sample_points(ensemble: EnsembleSpec, spec: SystemSpec) -> np.ndarray:
    """Materialize the ensemble as an (count, dimension) array of starts."""
    dim = ensemble.dimension
    base = np.array(ensemble.base)
    extent = np.array(ensemble.extent)
    if ensemble.sampling == "grid":
        g = round(ensemble.count ** (1.0 / dim))
        axis = (np.arange(g) + 0.5) / g
        mesh = np.meshgrid(*([axis] * dim), indexing="ij")
        pts = np.column_stack([m.ravel() for m in mesh])
        return (base + pts * extent) % 1.0
    if ensemble.sampling == "uniform_random":
        blocks = []
        done = 0
        chunk_index = 0
        while done < ensemble.count:
            m = min(_RNG_CHUNK, ensemble.count - done)
            rng = stream(ensemble.seed, "ensemble", chunk_index)
            blocks.append(rng.random((m, dim)))
            done += m
            chunk_index += 1
        return (base + np.vstack(blocks) * extent) % 1.0
    # unstable_segment
    u1, u2 = spec.matrix.unstable_direction
    params = (np.arange(ensemble.count) + 0.5) / ensemble.count * ensemble.length
    pts = np.empty((ensemble.count, dim))
    pts[:, 0] = (base[0] + params * u1) % 1.0
    pts[:, 1] = (base[1] + params * u2) % 1.0
    if dim == 3:
        pts[:, 2] = base[2] % 1.0
    return pts


def _chart_of_fiber(t: np.ndarray):
    """Split fiber heights into (sign, chart): t = sign*u mod 1, a = log tan(pi u)."""
    sign = np.where(t > 0.5, -1.0, 1.0)
    u = np.where(t > 0.5, 1.0 - t, t)
    with np.errstate(divide="ignore"):
        a = np.log(np.tan(math.pi * u))
    return sign, a


def _fiber_of_chart(sign: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Inverse of _chart_of_fiber, stable for |a| large."""
    u = np.where(
        a <= 0.0,
        np.arctan(np.exp(np.minimum(a, 0.0))) / math.pi,
        0.5 - np.arctan(np.exp(np.minimum(-a, 0.0))) / math.pi,
    )
    t = np.where(sign < 0.0, 1.0 - u, u)
    return np.where(t >= 1.0, t - 1.0, t)


class VectorOrbit:
    """Vectorized orbit of an ensemble of starts under one system.

    Mutable, single-owner.  Base coordinates advance by the integer matrix;
    fiber coordinates (3-dimensional variants) live in the log-tangent chart
    where each step is an additive shift, which keeps orbits pinned to the
    invariant circles exact and never saturates.
    """

    def __init__(self, spec: SystemSpec, points: np.ndarray):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if spec.variant == "skew_unbounded":
            raise ValueError("ensemble statistics need a compact phase space")
        self.spec = spec
        self.has_fiber = spec.variant in ("compactified3d", "morse_smale_control")
        want = 3 if self.has_fiber else 2
        if points.shape[1] != want:
            raise ValueError(f"{spec.variant} starts need dimension {want}")
        self.xs = points[:, :2] % 1.0
        if self.has_fiber:
            self._sign, self._a = _chart_of_fiber(points[:, 2] % 1.0)
            if spec.variant == "compactified3d":
                self._twopic = 2.0 * math.pi * spec.field.amplitude
            else:
                self._twopic = 2.0 * math.pi * spec.control_rate

    def current_points(self) -> np.ndarray:
        if not self.has_fiber:
            return self.xs
        return np.column_stack((self.xs, _fiber_of_chart(self._sign, self._a)))

    def step(self):
        if self.has_fiber:
            if self.spec.variant == "compactified3d":
                self._a += self._twopic * self.spec.phi.value_array(self.xs)
                self._sign *= -1.0
            else:
                self._a -= self._twopic
        m = self.spec.matrix
        x1 = (m.a * self.xs[:, 0] + m.b * self.xs[:, 1]) % 1.0
        x2 = (m.c * self.xs[:, 0] + m.d * self.xs[:, 1]) % 1.0
        self.xs = np.column_stack((x1, x2))


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of log(fraction) = log_prefactor - rate * n."""

    rate: float
    log_prefactor: float
    r_squared: float
    ns_used: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        for name in ("ns_used", "covariance"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "log_prefactor": self.log_prefactor,
            "r_squared": self.r_squared,
            "ns_used": self.ns_used.tolist(),
            "covariance": self.covariance.tolist(),
        }


def fit_rate(ns: np.ndarray, fractions: np.ndarray, counts: np.ndarray,
             min_count: int = 10) -> Optional[RateFit]:
    """Exponential-decay fit over the n whose deviant count is statistically
    meaningful (>= min_count; below that binomial noise swamps the slope).

    Returns None when fewer than two points qualify.
    """
    mask = counts >= min_count
    if int(np.count_nonzero(mask)) < 2:
        return None
    x = np.asarray(ns, dtype=float)[mask]
    y = np.log(np.asarray(fractions, dtype=float)[mask])
    if x.size >= 4:
        (slope, intercept), cov = np.polyfit(x, y, 1, cov=True)
    else:
        slope, intercept = np.polyfit(x, y, 1)
        cov = np.full((2, 2), np.nan)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return RateFit(rate=float(-slope), log_prefactor=float(intercept), r_squared=r2,
                   ns_used=x, covariance=np.asarray(cov))


@dataclass(frozen=True)
class DeviationCurve:
    """Per-n deviant fractions with the fitted exponential envelope."""

    ns: np.ndarray
    counts: np.ndarray
    total: int
    epsilon: float
    target: tuple
    fit: Optional[RateFit]
    below_resolution: bool = field(default=False)

    def __post_init__(self):
        ns = np.asarray(self.ns, dtype=np.int64)
        counts = np.asarray(self.counts, dtype=np.int64)
        for name, arr in (("ns", ns), ("counts", counts)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "target", (float(self.target[0]), float(self.target[1])))

    @property
    def fractions(self) -> np.ndarray:
        return self.counts / self.total

    def csv_rows(self):
        """(n, deviant_count, total, fraction) per checkpoint."""
        return [(int(n), int(c), self.total, c / self.total)
                for n, c in zip(self.ns, self.counts)]

    def to_dict(self) -> dict:
        return {
            "ns": self.ns.tolist(),
            "counts": self.counts.tolist(),
            "total": self.total,
            "epsilon": self.epsilon,
            "target": list(self.target),
            "fit": None if self.fit is None else self.fit.to_dict(),
            "below_resolution": self.below_resolution,
        }


@dataclass(frozen=True)
class ConvergenceCurve:
    """Per-n fractions of members whose empirical vector is eta-close to a target."""

    ns: np.ndarray
    counts: np.ndarray
    total: int
    eta: float

    def __post_init__(self):
        ns = np.asarray(self.ns, dtype=np.int64)
        counts = np.asarray(self.counts, dtype=np.int64)
        for name, arr in (("ns", ns), ("counts", counts)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def fractions(self) -> np.ndarray:
        return self.counts / self.total

    def csv_rows(self):
        return [(int(n), int(c), self.total, c / self.total)
                for n, c in zip(self.ns, self.counts)]


def target_interval(spec: SystemSpec, observable: Observable) -> tuple:
    """Closed interval of possible limit averages of the observable.

    anosov2d: volume is the unique Gibbs u-state, so the interval degenerates
    to the space average -- zero for every valid (mean-free) observable.
    compactified3d: limits of averages range over integrals against the
    segment of measures between the two fiber-Dirac u-states; by linearity
    the interval is spanned by the two endpoint integrals, and only terms
    with pure fiber frequency (0, 0, l) survive them.
    """
    if spec.variant == "anosov2d":
        if observable.dimension != 2:
            raise ValueError("anosov2d takes base observables")
        return (0.0, 0.0)
    if spec.variant == "compactified3d":
        if observable.dimension != 3:
            raise ValueError("compactified3d takes observables on T^3")
        v1 = 0.0
        v2 = 0.0
        for freq, kind, coeff in observable.terms:
            if freq[0] == 0 and freq[1] == 0 and kind == "cos":
                v1 += coeff  # cos(2 pi l 0) = 1
                v2 += coeff * ((-1) ** (freq[2] % 2))  # cos(pi l)
        return (min(v1, v2), max(v1, v2))
    raise ValueError(
        f"no closed-form limit interval for variant {spec.variant!r}; "
        "pass target=(lo, hi) explicitly")


def _prepare_ns(n_list) -> np.ndarray:
    ns = np.unique(np.asarray(list(n_list), dtype=np.int64))
    if ns.size == 0:
        raise ValueError("n_list is empty")
    if ns[0] < 1:
        raise ValueError("checkpoints must be positive")
    return ns


def _member_blocks(total: int, block: int = 1 << 18):
    """Fixed row partition; per-member results never depend on the split."""
    return [(lo, min(lo + block, total)) for lo in range(0, total, block)]


def _deviant_block(args):
    """Per-block deviant counts at every checkpoint (module-level: picklable)."""
    spec, points, observable, epsilon, ns, lo, hi = args
    orbit = VectorOrbit(spec, points)
    sums = np.zeros(orbit.xs.shape[0])
    counts = np.zeros(ns.size, dtype=np.int64)
    checkpoint = {int(n): i for i, n in enumerate(ns)}
    for i in range(1, int(ns[-1]) + 1):
        sums += observable.value_array(orbit.current_points())
        orbit.step()
        if i in checkpoint:
            avg = sums / i
            dist = np.maximum(np.maximum(lo - avg, avg - hi), 0.0)
            counts[checkpoint[i]] = int(np.count_nonzero(dist >= epsilon))
    return counts


def deviant_fraction(spec: SystemSpec, ensemble: EnsembleSpec, observable: Observable,
                     epsilon: float, n_list, target: Optional[tuple] = None,
                     mapper=None) -> DeviationCurve:
    """Fraction of starts whose n-step average of the observable sits at
    distance >= epsilon from the limit interval, for each n, with a rate fit.

    One vectorized sweep to max(n_list); members are never re-based, so
    counts at different n come from the same points.  Member blocks are
    independent and merge by integer addition, so any mapper gives identical
    counts.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    ns = _prepare_ns(n_list)
    if target is None:
        target = target_interval(spec, observable)
    lo, hi = float(target[0]), float(target[1])
    if hi < lo:
        raise ValueError("target interval is reversed")

    points = sample_points(ensemble, spec)
    m = points.shape[0]
    tasks = [(spec, points[a:b], observable, float(epsilon), ns, lo, hi)
             for a, b in _member_blocks(m)]
    counts = sum((mapper or map)(_deviant_block, tasks))

    below = not np.any(counts)
    fit = None if below else fit_rate(ns, counts / m, counts)
    return DeviationCurve(ns=ns, counts=counts, total=m, epsilon=float(epsilon),
                          target=(lo, hi), fit=fit, below_resolution=below)


def _convergent_block(args):
    """Per-block convergent counts at every checkpoint (module-level: picklable)."""
    spec, points, target, eta, ns = args
    family = target.family
    orbit = VectorOrbit(spec, points)
    sums = np.zeros((orbit.xs.shape[0], family.size))
    counts = np.zeros(ns.size, dtype=np.int64)
    checkpoint = {int(n): i for i, n in enumerate(ns)}
    for i in range(1, int(ns[-1]) + 1):
        sums += family.evaluate(orbit.current_points())
        orbit.step()
        if i in checkpoint:
            dists = np.abs(sums / i - target.values) @ family.weights
            counts[checkpoint[i]] = int(np.count_nonzero(dists < eta))
    return counts


def convergent_fraction(spec: SystemSpec, ensemble: EnsembleSpec, target: MeasureVector,
                        eta: float, n_list, mapper=None) -> ConvergenceCurve:
    """Fraction of starts whose n-step empirical vector lies within eta of the
    target in the weighted test-family distance."""
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    ns = _prepare_ns(n_list)
    family = target.family
    want = 3 if spec.variant in ("compactified3d", "morse_smale_control") else 2
    if family.dimension != want:
        raise ValueError("test family dimension does not match the system")

    points = sample_points(ensemble, spec)
    total = points.shape[0]
    # block members so the (m, family.size) work array stays modest
    block = max(1, int(5e7) // family.size)
    tasks = [(spec, points[a:b], target, float(eta), ns)
             for a, b in _member_blocks(total, block)]
    counts = sum((mapper or map)(_convergent_block, tasks))
    return ConvergenceCurve(ns=ns, counts=counts, total=total, eta=float(eta))
