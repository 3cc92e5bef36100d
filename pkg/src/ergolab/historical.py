"""Non-convergence of empirical measures along single long orbits.

One streaming pass over the orbit snapshots the empirical measure vector at
geometrically spaced checkpoints and tracks three distances: to each of the
two fiber-Dirac reference measures and to the segment spanned by them.  A
historical orbit shows both pointwise distances dipping low infinitely often
(the empirical measure swings between the two references) while the segment
distance keeps shrinking; a convergent orbit pins one distance down and the
oscillation score to zero.

Checkpoints are geometric because the swing mechanism operates on
multiplicative time scales: whatever the empirical measure looks like at
time n, overturning it needs a comparable amount of fresh orbit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .lyapunov import _fiber_chart, _kernel_args
from .measures import (MeasureVector, TestFamily, distance_to_segment,
                       reference_measure, weak_star_distance)
from .schedule import geometric_checkpoints
from .torus_maps import SystemSpec, TorusPoint3

__all__ = [
    "OscillationLog",
    "scan_orbit",
    "nonconvergence_score",
    "MAX_ORBIT_LENGTH",
]

MAX_ORBIT_LENGTH = 10 ** 9


@dataclass(frozen=True)
class OscillationLog:
    """Checkpointed distances of one orbit's empirical measures.

    d1/d2 are distances to the two fiber-Dirac references, dseg to the
    segment between them, base_marginal to volume on the base factor.  The
    full empirical vectors are kept so new targets can be tested later
    without re-running the orbit.
    """

    checkpoints: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    dseg: np.ndarray
    min_d1: np.ndarray
    min_d2: np.ndarray
    base_marginal: np.ndarray
    vectors: np.ndarray  # (n_checkpoints, family.size) empirical integrals
    family: TestFamily
    start: TorusPoint3

    def __post_init__(self):
        for name in ("checkpoints", "d1", "d2", "dseg", "min_d1", "min_d2",
                     "base_marginal", "vectors"):
            arr = np.asarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def measure_at(self, index: int) -> MeasureVector:
        return MeasureVector(self.family, self.vectors[index])

    def csv_rows(self):
        """(n, d1, d2, dseg, min_d1, min_d2) per checkpoint."""
        return [(int(n), float(a), float(b), float(s), float(m1), float(m2))
                for n, a, b, s, m1, m2 in zip(self.checkpoints, self.d1, self.d2,
                                              self.dseg, self.min_d1, self.min_d2)]


def scan_orbit(spec: SystemSpec, start: TorusPoint3, n_max: int,
               schedule: Optional[np.ndarray] = None,
               family: Optional[TestFamily] = None) -> OscillationLog:
    """One streaming orbit scan; memory stays O(checkpoints x family size).

    Works for the compactified skew product (the historical case) and the
    contracting control system (the convergent control case).
    """
    if spec.variant not in ("compactified3d", "morse_smale_control"):
        raise ValueError("orbit scans apply to the 3D skew variants")
    if not (1 <= n_max <= MAX_ORBIT_LENGTH):
        raise ValueError(f"n_max must lie in [1, {MAX_ORBIT_LENGTH:.0e}]")
    if family is None:
        family = TestFamily(3, 2)
    if schedule is None:
        schedule = geometric_checkpoints(n_max, 1.3)
    else:
        schedule = np.asarray(schedule, dtype=np.int64)
        if schedule.size == 0 or np.any(np.diff(schedule) <= 0) or schedule[0] < 1:
            raise ValueError("schedule must be strictly increasing positive counts")
        if schedule[-1] != n_max:
            raise ValueError("schedule must end exactly at n_max")

    m, phik, phikind, phic, twopic, mode = _kernel_args(spec)
    kind, lt0, mirror = _fiber_chart(start.t)
    waves = kernels.scan_skew_orbit(
        float(m.a), float(m.b), float(m.c), float(m.d), phik, phikind, phic,
        start.base.x1, start.base.x2, kind, lt0, mirror, twopic, mode,
        schedule, family.frequency_array, family.max_norm)

    n_chk = schedule.shape[0]
    vectors = np.empty((n_chk, family.size))
    vectors[:, 0] = 1.0
    counts = schedule.astype(float)[:, None]
    vectors[:, 1::2] = waves[:, :, 0] / counts
    vectors[:, 2::2] = waves[:, :, 1] / counts

    nu1 = reference_measure(family, "nu1")
    nu2 = reference_measure(family, "nu2")
    family2 = TestFamily(2, family.max_norm)
    proj = family.base_projection(family2)
    volume2 = reference_measure(family2, "volume")

    d1 = np.empty(n_chk)
    d2 = np.empty(n_chk)
    dseg = np.empty(n_chk)
    marginal = np.empty(n_chk)
    for i in range(n_chk):
        mu = MeasureVector(family, vectors[i])
        d1[i] = weak_star_distance(mu, nu1)
        d2[i] = weak_star_distance(mu, nu2)
        dseg[i] = distance_to_segment(mu, nu1, nu2)
        base_mu = MeasureVector(family2, vectors[i, proj])
        marginal[i] = weak_star_distance(base_mu, volume2)

    return OscillationLog(
        checkpoints=schedule, d1=d1, d2=d2, dseg=dseg,
        min_d1=np.minimum.accumulate(d1), min_d2=np.minimum.accumulate(d2),
        base_marginal=marginal, vectors=vectors, family=family, start=start)


def nonconvergence_score(log: OscillationLog) -> float:
    """Oscillation amplitude over the final half of the schedule.

    max |d1(n) - d1(n')| over checkpoint pairs in the tail: near zero for
    orbits whose empirical measures settle, bounded away from zero when they
    keep swinging between the references.
    """
    k = log.checkpoints.shape[0]
    if k < 10:
        raise ValueError("need at least 10 checkpoints for a meaningful score")
    tail = log.d1[k // 2:]
    return float(tail.max() - tail.min())
