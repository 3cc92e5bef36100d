"""Entropy along unstable segments: separated sets, Bowen balls, Pesin margins.

Separated sets are built greedily on a fine parameter grid over a segment
tangent to the unstable eigendirection.  Admission checks separation against
the most recently admitted point only; this is sound here because segment
points drift apart along the unstable direction at the uniform factor
lambda per step, so for rho < 1/(2 lambda) the orbit gap of a wider pair
must pass through (rho, 1/2] at some iterate before it can wrap (it grows by
less than a factor 1/(2 rho) per step).  The result is re-verified after the
fact by direct pairwise checks and a maximality probe, so the shortcut is an
optimization with a witness, not an assumption.

Three-dimensional systems take their segments on a fiber-invariant torus
(height 0 or 1/2, or any height for the autonomous control fiber), where the
fiber coordinates of all segment points agree for all time and the full
phase-space metric of the admission rule collapses to the base torus metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .deviations import EnsembleSpec
from .lyapunov import center_exponent_trace, spectrum_trace
from .torus_maps import SystemSpec, TorusPoint2, TorusPoint3

__all__ = [
    "GridResolutionError",
    "SeparatedSetResult",
    "GibbsResidual",
    "PesinReport",
    "max_separated_set",
    "u_entropy_estimate",
    "gibbs_residual",
    "bowen_ball_volume",
    "pesin_check",
    "DEFAULT_R0",
    "DEFAULT_RHO",
]

DEFAULT_R0 = 0.1
DEFAULT_RHO = 0.02
_MAX_POINTS = 12_000_000
_GRID_REFINE = 16  # admission spacing is ~rho lambda^{-n}; the scan grid is 16x finer


class GridResolutionError(RuntimeError):
    """The admitted-set spacing hit the scan grid floor; the count is grid-limited."""


# generic irrational offsets (golden-ratio combinations) for orbit anchor points
_IRR1 = 0.3819660112501051
_IRR2 = 0.2360679774997897


def _anchor(spec: SystemSpec, segment: EnsembleSpec, start=None):
    """A generic orbit start near the segment, unless one is supplied."""
    if start is not None:
        return start
    base = segment.base
    p2 = TorusPoint2(base[0] + _IRR1, base[1] + _IRR2)
    if spec.variant == "anosov2d":
        return p2
    return TorusPoint3(p2, base[2] if len(base) > 2 else 0.25)


@dataclass(frozen=True)
class SeparatedSetResult:
    """A maximal (n, rho)-separated set on one unstable segment."""

    n: int
    rho: float
    params: np.ndarray  # segment parameters of admitted points, increasing
    cardinality: int
    min_gap: float
    delta: float  # scan grid resolution
    segment: EnsembleSpec
    pairwise_verified: bool
    maximality_verified: bool

    def __post_init__(self):
        p = np.asarray(self.params, dtype=float)
        p.flags.writeable = False
        object.__setattr__(self, "params", p)

    @property
    def log_cardinality(self) -> float:
        return math.log(self.cardinality)


def _segment_geometry(spec: SystemSpec, segment: EnsembleSpec):
    """(bx, by, ex, ey) of the segment; validates the fiber-invariance rule."""
    if segment.sampling != "unstable_segment":
        raise ValueError("separated sets need an unstable_segment ensemble")
    want = 3 if spec.variant in ("compactified3d", "morse_smale_control") else 2
    if segment.dimension != want:
        raise ValueError(f"{spec.variant} segments need dimension {want}")
    if spec.variant == "compactified3d":
        t = segment.base[2] % 1.0
        if t not in (0.0, 0.5):
            raise ValueError(
                "separated sets on the skew system need a segment on an "
                "invariant torus (fiber height 0 or 1/2), where the strong "
                "unstable leaf lies in the torus and the d_n metric is exact")
    ex, ey = spec.matrix.unstable_direction
    return segment.base[0], segment.base[1], ex, ey


def _require_feasible(spec: SystemSpec, segment: EnsembleSpec, n: int, rho: float):
    lam = spec.matrix.expansion
    if n < 0:
        raise ValueError("n must be nonnegative")
    if not (0.0 < rho < 0.5):
        raise ValueError("rho must lie in (0, 1/2)")
    if rho >= 0.5 / lam:
        raise ValueError(
            f"rho must be below 1/(2 lambda) = {0.5 / lam:.4f} for the "
            "admission rule to be exact")
    if segment.length > DEFAULT_R0 + 1e-12:
        raise ValueError(f"segment length must not exceed r0 = {DEFAULT_R0}")
    predicted = segment.length * lam ** n / rho
    if predicted > _MAX_POINTS:
        raise ValueError(
            f"predicted cardinality ~{predicted:.2e} exceeds the "
            f"{_MAX_POINTS:.0e} budget; lower n or shorten the segment")


def max_separated_set(spec: SystemSpec, segment: EnsembleSpec, n: int,
                      rho: float = DEFAULT_RHO, probe_count: int = 4096) -> SeparatedSetResult:
    """Greedy maximal (n, rho)-separated set, verified after construction.

    Separation uses iterates k = 0..n inclusive (n = 0 is plain packing of
    the segment at scale rho).  The scan grid is 16x finer than the expected
    admission spacing rho lambda^{-n}; if admitted points ever sit at the
    grid floor the count is resolution-limited and a GridResolutionError is
    raised instead of returning a silently wrong cardinality.
    """
    _require_feasible(spec, segment, n, rho)
    bx, by, ex, ey = _segment_geometry(spec, segment)
    lam = spec.matrix.expansion
    n_eff = n + 1
    delta = rho * lam ** (-n) / _GRID_REFINE
    ma, mb, mc, md = (float(v) for v in (spec.matrix.a, spec.matrix.b,
                                         spec.matrix.c, spec.matrix.d))
    params, count, min_gap = kernels.separated_greedy(
        ma, mb, mc, md, bx, by, ex, ey, segment.length, delta, n_eff, rho,
        _MAX_POINTS)
    if count < 0:
        raise ValueError("separated set overflowed the point budget")
    if count > 1 and min_gap <= delta * (1.0 + 1e-9):
        raise GridResolutionError(
            f"admitted spacing {min_gap:.3e} reached the scan resolution "
            f"{delta:.3e}; refine the grid")

    ok_pairs = bool(kernels.verify_adjacent_separation(
        ma, mb, mc, md, bx, by, ex, ey, params, n_eff, rho))
    probes = (np.arange(probe_count) + 0.5) / probe_count * segment.length
    ok_maximal = bool(kernels.probe_maximality(
        ma, mb, mc, md, bx, by, ex, ey, params, probes, n_eff, rho))
    if not ok_pairs:
        raise AssertionError("internal error: admitted points fail pairwise separation")
    return SeparatedSetResult(n=n, rho=rho, params=params, cardinality=count,
                              min_gap=float(min_gap), delta=delta, segment=segment,
                              pairwise_verified=ok_pairs, maximality_verified=ok_maximal)


def u_entropy_estimate(spec: SystemSpec, segment: EnsembleSpec, rho: float,
                       n_list, results: Optional[list] = None) -> float:
    """Exponential growth rate of maximal separated-set cardinalities.

    Least-squares slope of log cardinality against n.  Pass a list as
    ``results`` to receive the per-n SeparatedSetResult objects.
    """
    ns = sorted(int(n) for n in n_list)
    if len(ns) < 4:
        raise ValueError("n_list needs at least 4 entries for a stable slope")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("n_list must be strictly increasing")
    logs = []
    for n in ns:
        res = max_separated_set(spec, segment, n, rho)
        if results is not None:
            results.append(res)
        logs.append(res.log_cardinality)
    slope = np.polyfit(np.array(ns, dtype=float), np.array(logs), 1)[0]
    return float(slope)


@dataclass(frozen=True)
class GibbsResidual:
    """u-entropy estimate against the unstable Jacobian average."""

    entropy_estimate: float
    jacobian_integral: float

    @property
    def residual(self) -> float:
        return self.entropy_estimate - self.jacobian_integral


def _unstable_jacobian_average(spec: SystemSpec, start, orbit_length: int) -> float:
    """Orbit average of log|det Df restricted to the strong unstable line|.

    Computed as the leading Lyapunov rate over the orbit window, i.e. by
    driving a tangent vector and renormalizing; for these systems the
    unstable line dominates, so the power iteration converges onto it.
    """
    rates = spectrum_trace(spec, start, orbit_length)
    return float(rates[0])


def gibbs_residual(spec: SystemSpec, segment: EnsembleSpec, rho: float, n_list,
                   orbit_length: int = 2000) -> GibbsResidual:
    """Residual of h = int log|det(Df|E^uu)| for the volume-class measures.

    Zero residual is the Gibbs property of the u-state; the Ruelle-type
    inequality makes any strongly positive residual a bug regardless of
    tolerances.
    """
    h = u_entropy_estimate(spec, segment, rho, n_list)
    jac = _unstable_jacobian_average(spec, _anchor(spec, segment), orbit_length)
    return GibbsResidual(entropy_estimate=h, jacobian_integral=jac)


def bowen_ball_volume(spec: SystemSpec, segment: EnsembleSpec, center: float,
                      n: int, rho: float = DEFAULT_RHO) -> float:
    """Length of the (n, rho)-Bowen ball around a segment point, inside it.

    The ball in the d_n metric is an interval on the segment (uniform
    expansion), located by bisection on each side of the center.
    """
    _require_feasible(spec, segment, n, rho)
    bx, by, ex, ey = _segment_geometry(spec, segment)
    if not (0.0 <= center <= segment.length):
        raise ValueError("center parameter must lie on the segment")
    ma, mb, mc, md = (float(v) for v in (spec.matrix.a, spec.matrix.b,
                                         spec.matrix.c, spec.matrix.d))
    return float(kernels.bowen_ball_length(ma, mb, mc, md, bx, by, ex, ey,
                                           segment.length, center, n + 1, rho))


@dataclass(frozen=True)
class PesinReport:
    """Entropy lower bound against log|det Df restricted to a subspace F|."""

    entropy_estimate: float
    jacobian_integral: float
    subspace: str

    @property
    def margin(self) -> float:
        return self.entropy_estimate - self.jacobian_integral

    def to_dict(self) -> dict:
        return {
            "entropy_estimate": self.entropy_estimate,
            "jacobian_integral": self.jacobian_integral,
            "subspace": self.subspace,
            "margin": self.margin,
        }


def pesin_check(spec: SystemSpec, segment: EnsembleSpec, rho: float, n_list,
                subspace: str = "unstable", orbit_length: int = 100_000,
                start=None) -> PesinReport:
    """Margin of the entropy inequality h >= int log|det(Df|F)| for a choice of F.

    F = "unstable": the unstable line; the margin should vanish (Gibbs case).
    F = "full": the whole tangent space; for the area-preserving base the
    Jacobian term is exactly zero and the margin equals the entropy.
    F = "unstable_fiber": unstable line plus the fiber direction; on the
    contracting control system the fiber contributes its negative exponent,
    which the margin recovers.
    """
    h = u_entropy_estimate(spec, segment, rho, n_list)
    if subspace == "unstable":
        jac = _unstable_jacobian_average(spec, _anchor(spec, segment, start),
                                         min(orbit_length, 10_000))
    elif subspace == "full":
        if spec.variant != "anosov2d":
            raise ValueError("full-tangent Jacobian check applies to the base automorphism")
        jac = math.log(abs(spec.matrix.a * spec.matrix.d - spec.matrix.b * spec.matrix.c))
    elif subspace == "unstable_fiber":
        if spec.variant not in ("morse_smale_control", "compactified3d"):
            raise ValueError("unstable_fiber needs a system with a fiber direction")
        anchor = start if start is not None else TorusPoint3(TorusPoint2(_IRR1, _IRR2), 0.25)
        trace = center_exponent_trace(spec, anchor, orbit_length)
        jac = spec.matrix.log_expansion + float(trace.lambda_c[-1])
    else:
        raise ValueError(f"unknown subspace {subspace!r}")
    return PesinReport(entropy_estimate=h, jacobian_integral=float(jac),
                       subspace=subspace)
