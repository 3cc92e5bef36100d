"""Finite-time Lyapunov exponents and a dominated-splitting diagnostic.

For the skew systems the fiber direction (0, 0, 1) is exactly invariant, so
the center exponent is the orbit average of scalar log fiber derivatives;
no Oseledets extraction is needed and the lambda^c -> 0 decay is measurable
to the precision of the Birkhoff sums themselves.  The full spectrum comes
from per-step QR orthogonalization of the tangent frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .rng import stream
from .schedule import geometric_checkpoints
from .torus_maps import (
    SystemSpec,
    TorusPoint2,
    TorusPoint3,
    apply_system,
    fiber_derivative,
    tangent_matrix,
)

__all__ = [
    "ExponentTrace",
    "SplittingDiagnostic",
    "center_exponent_trace",
    "spectrum_trace",
    "domination_diagnostic",
]


@dataclass(frozen=True)
class ExponentTrace:
    """Per-checkpoint finite-time center exponents of one orbit."""

    ns: np.ndarray
    lambda_c: np.ndarray
    log_sums: np.ndarray  # accumulated log fiber derivative at each checkpoint

    def __post_init__(self):
        for name in ("ns", "lambda_c", "log_sums"):
            arr = np.asarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def rows(self):
        """(n, lambda_c) pairs, checkpoint by checkpoint."""
        return list(zip(self.ns.tolist(), self.lambda_c.tolist()))

    @property
    def final(self) -> float:
        return float(self.lambda_c[-1])


@dataclass(frozen=True)
class SplittingDiagnostic:
    """Empirical margins of the 3-way dominated splitting at N = 1.

    ``margin`` is the worst observed gap min(log expansion - log fiber rate,
    log fiber rate + log expansion) over the sampled orbits; positive means
    the fiber (center) rates stay strictly between the stable and unstable
    base rates.  ``analytic_margin`` is the a priori bound
    log lambda_u - 2 pi c sup|phi|, which is sample-free.
    """

    margin: float
    analytic_margin: float
    max_log_fiber_rate: float
    min_log_fiber_rate: float
    cone_angle_max: float
    cone_angle_mean: float
    holds: bool
    sample_size: int
    steps_per_orbit: int


def _fiber_chart(t0: float) -> tuple[int, float, float]:
    """(fiber_kind, log-tangent value, mirror sign) for a start height."""
    if t0 == 0.0:
        return kernels.FIBER_AT_ZERO, 0.0, 1.0
    if t0 == 0.5:
        return kernels.FIBER_AT_HALF, 0.0, 1.0
    if t0 < 0.5:
        return kernels.FIBER_GENERIC, math.log(math.tan(math.pi * t0)), 1.0
    return kernels.FIBER_GENERIC, math.log(math.tan(math.pi * (1.0 - t0))), -1.0


def _kernel_args(spec: SystemSpec):
    """(matrix scalars, phi arrays, twopic, mode) shared by the orbit kernels."""
    m = spec.matrix
    if spec.variant == "compactified3d":
        phik, phikind, phic = spec.phi.term_arrays()
        return m, phik, phikind, phic, 2.0 * math.pi * spec.field.amplitude, kernels.MODE_COMPACTIFIED
    if spec.variant == "morse_smale_control":
        phik = np.zeros((1, 2), dtype=np.int64)
        phik[0, 0] = 1
        phikind = np.zeros(1, dtype=np.int64)
        phic = np.zeros(1)
        return m, phik, phikind, phic, 2.0 * math.pi * spec.control_rate, kernels.MODE_CONTROL
    raise ValueError(f"variant {spec.variant} has no invariant fiber direction")


def center_exponent_trace(spec: SystemSpec, start: TorusPoint3, n_max: int,
                          checkpoints=None) -> ExponentTrace:
    """Finite-time center exponents (1/n) sum_i log|d fiber map| along an orbit.

    Starts on the invariant circles t = 0, 1/2 are legal; there the per-step
    derivative is the linearization e^{+-2 pi c phi(x_i)} (resp. e^{-+2 pi
    kappa}).  Checkpoints default to a geometric schedule ending at n_max.
    """
    if n_max < 1:
        raise ValueError("n_max must be positive")
    if checkpoints is None:
        chk = geometric_checkpoints(n_max)
    else:
        chk = np.unique(np.asarray(checkpoints, dtype=np.int64))
        if chk.size == 0 or chk[0] < 1 or chk[-1] != n_max:
            raise ValueError("checkpoints must be positive and end at n_max")
    m, phik, phikind, phic, twopic, mode = _kernel_args(spec)
    kind, lt0, _ = _fiber_chart(start.t)
    sums = kernels.center_scan(float(m.a), float(m.b), float(m.c), float(m.d),
                               phik, phikind, phic,
                               start.base.x1, start.base.x2,
                               kind, lt0, twopic, mode, chk)
    return ExponentTrace(ns=chk, lambda_c=sums / chk, log_sums=sums)


def spectrum_trace(spec: SystemSpec, start, n_max: int, burn_in: int = 200) -> list[float]:
    """Lyapunov spectrum via per-step QR, averaged over [burn_in, burn_in + n_max).

    The warm-up steps let the orthonormal frame align with the invariant
    flag, after which each QR diagonal tracks one exponent; without warm-up
    the O(1) alignment transient pollutes the average at the 1/n level.
    Rates are returned sorted descending.

    Raises:
        ValueError: if n_max < 100 (too short for the frame to mean anything).
    """
    if n_max < 100:
        raise ValueError("n_max must be at least 100")
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")
    m = spec.matrix
    if spec.variant == "anosov2d":
        p = start if isinstance(start, TorusPoint2) else TorusPoint2(start[0], start[1])
        s1, s2 = kernels.spectrum_scan2(float(m.a), float(m.b), float(m.c), float(m.d),
                                        p.x1, p.x2, burn_in, n_max)
        rates = [s1 / n_max, s2 / n_max]
        return sorted(rates, reverse=True)
    if not isinstance(start, TorusPoint3):
        raise ValueError("3D variants need a TorusPoint3 start")
    _, phik, phikind, phic, twopic, mode = _kernel_args(spec)
    kind, lt0, mirror = _fiber_chart(start.t)
    amplitude = spec.field.amplitude if spec.variant == "compactified3d" else spec.control_rate
    sums = kernels.spectrum_scan3(float(m.a), float(m.b), float(m.c), float(m.d),
                                  phik, phikind, phic,
                                  start.base.x1, start.base.x2,
                                  kind, lt0, mirror, twopic, mode,
                                  burn_in, n_max, amplitude)
    rates = sorted((sums / n_max).tolist(), reverse=True)
    return rates


def domination_diagnostic(spec: SystemSpec, sample_size: int = 64,
                          steps_per_orbit: int = 500, seed: int = 0) -> SplittingDiagnostic:
    """Empirical check that fiber rates are dominated by the base hyperbolicity.

    Samples random orbits, records the extreme per-step log fiber derivatives,
    and compares them against +-log of the base expansion.  Also iterates the
    horizontal lift of the unstable eigendirection and reports how far it
    tilts (the unstable cone stays thin exactly when domination holds).
    """
    if spec.variant != "compactified3d":
        raise ValueError("the splitting diagnostic applies to compactified3d")
    rng = stream(seed, "domination")
    log_lam = spec.matrix.log_expansion
    e_u = spec.matrix.unstable_direction
    lift = np.array([e_u[0], e_u[1], 0.0])

    max_logd = -math.inf
    min_logd = math.inf
    angles = []
    for _ in range(sample_size):
        x = TorusPoint3(TorusPoint2(rng.random(), rng.random()), rng.random())
        v = lift.copy()
        for _ in range(steps_per_orbit):
            s = spec.phi.value(x.base)
            logd = math.log(fiber_derivative(spec.field, s, x.t))
            max_logd = max(max_logd, logd)
            min_logd = min(min_logd, logd)
            v = tangent_matrix(spec, x) @ v
            v /= np.linalg.norm(v)
            cosang = abs(float(v @ lift))
            angles.append(math.acos(min(1.0, cosang)))
            x = apply_system(spec, x)

    margin = min(log_lam - max_logd, min_logd + log_lam)
    analytic = log_lam - 2.0 * math.pi * spec.field.amplitude * spec.phi.sup_bound()
    return SplittingDiagnostic(
        margin=margin,
        analytic_margin=analytic,
        max_log_fiber_rate=max_logd,
        min_log_fiber_rate=min_logd,
        cone_angle_max=float(np.max(angles)),
        cone_angle_mean=float(np.mean(angles)),
        holds=margin > 0.0,
        sample_size=sample_size,
        steps_per_orbit=steps_per_orbit,
    )
