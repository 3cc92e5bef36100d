"""Orbit scans: streaming empirical vectors against a pure-Python oracle,
oscillation scores, and the convergent control case."""

import numpy as np
import pytest

from ergolab.historical import MAX_ORBIT_LENGTH, nonconvergence_score, scan_orbit
from ergolab.measures import (
    EmpiricalAccumulator,
    MeasureVector,
    TestFamily,
    distance_to_segment,
    reference_measure,
    weak_star_distance,
)
from ergolab.torus_maps import TorusPoint2, TorusPoint3, apply_system

START = TorusPoint3(TorusPoint2(0.3819660112501051, 0.2360679774997897), 0.25)


@pytest.mark.parametrize("t0", [0.25, 0.7])
def test_scan_matches_pointwise_accumulator(compactified3d, t0):
    """The streaming kernel equals accumulating the mapped orbit point by point."""
    start = TorusPoint3(TorusPoint2(0.3, 0.7), t0)
    schedule = [10, 100, 500]
    log = scan_orbit(compactified3d, start, 500, schedule=schedule)
    family = log.family
    family2 = TestFamily(2, family.max_norm)
    acc = EmpiricalAccumulator(family)
    acc2 = EmpiricalAccumulator(family2)
    volume2 = reference_measure(family2, "volume")
    nu1 = reference_measure(family, "nu1")
    nu2 = reference_measure(family, "nu2")
    p = start
    done = 0
    for i, n in enumerate(schedule):
        while done < n:
            acc.add((p.base.x1, p.base.x2, p.t))
            acc2.add((p.base.x1, p.base.x2))
            p = apply_system(compactified3d, p)
            done += 1
        mu = acc.finalize()
        assert np.allclose(log.vectors[i], mu.values, atol=1e-9)
        assert log.d1[i] == pytest.approx(weak_star_distance(mu, nu1), abs=1e-9)
        assert log.d2[i] == pytest.approx(weak_star_distance(mu, nu2), abs=1e-9)
        assert log.dseg[i] == pytest.approx(distance_to_segment(mu, nu1, nu2), abs=1e-6)
        marg = weak_star_distance(acc2.finalize(), volume2)
        assert log.base_marginal[i] == pytest.approx(marg, abs=1e-9)


def test_scan_on_invariant_circle(compactified3d):
    """Starts at height 0 keep the fiber entries exactly at the nu1 values."""
    log = scan_orbit(compactified3d, TorusPoint3(TorusPoint2(0.3, 0.7), 0.0), 3000)
    fam = log.family
    for i, k in enumerate(fam.canonical_frequencies):
        if k[0] == 0 and k[1] == 0:
            assert np.all(log.vectors[:, 1 + 2 * i] == 1.0)
            assert np.all(log.vectors[:, 2 + 2 * i] == 0.0)
    assert log.d1[-1] < 0.05
    assert log.d2[-1] > 0.9
    # nu1 lies on the segment, so dseg can never exceed d1
    assert np.all(log.dseg <= log.d1 + 2e-6)


def test_minima_and_segment_inequalities(compactified3d):
    log = scan_orbit(compactified3d, START, 20000)
    assert np.array_equal(log.min_d1, np.minimum.accumulate(log.d1))
    assert np.array_equal(log.min_d2, np.minimum.accumulate(log.d2))
    assert np.all(log.dseg <= np.minimum(log.d1, log.d2) + 2e-6)
    assert np.all(np.diff(log.checkpoints) > 0)
    assert log.checkpoints[-1] == 20000


@pytest.mark.slow
def test_orbit_swings_while_control_settles(compactified3d, control):
    hist = scan_orbit(compactified3d, START, 10 ** 6)
    assert nonconvergence_score(hist) > 0.1
    assert hist.dseg[-1] < 0.01
    assert hist.base_marginal[-1] < 0.01
    conv = scan_orbit(control, START, 10 ** 5)
    assert nonconvergence_score(conv) < 0.05
    assert conv.d1[-1] < 0.01  # pinned to m x delta_0
    assert conv.d2[-1] > 0.9


def test_score_needs_enough_checkpoints(compactified3d):
    log = scan_orbit(compactified3d, START, 9, schedule=list(range(1, 10)))
    with pytest.raises(ValueError):
        nonconvergence_score(log)


def test_scan_validation(compactified3d, anosov2d):
    with pytest.raises(ValueError):
        scan_orbit(anosov2d, START, 100)
    with pytest.raises(ValueError):
        scan_orbit(compactified3d, START, 0)
    with pytest.raises(ValueError):
        scan_orbit(compactified3d, START, MAX_ORBIT_LENGTH * 10)
    with pytest.raises(ValueError):
        scan_orbit(compactified3d, START, 100, schedule=[10, 50])  # wrong end
    with pytest.raises(ValueError):
        scan_orbit(compactified3d, START, 100, schedule=[50, 10, 100])
    with pytest.raises(ValueError):
        scan_orbit(compactified3d, START, 100, schedule=[0, 100])


def test_log_accessors(compactified3d):
    log = scan_orbit(compactified3d, START, 1000)
    rows = log.csv_rows()
    assert len(rows) == log.checkpoints.shape[0]
    n, d1, d2, dseg, m1, m2 = rows[-1]
    assert n == 1000 and isinstance(n, int)
    assert d1 == log.d1[-1] and m2 == log.min_d2[-1]
    mu = log.measure_at(0)
    assert isinstance(mu, MeasureVector)
    assert mu.values[0] == 1.0
    assert np.array_equal(mu.values, log.vectors[0])
