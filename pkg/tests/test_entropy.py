"""Separated sets, cardinality growth, Bowen balls, Gibbs and Pesin margins."""

import math

import numpy as np
import pytest

from ergolab.deviations import EnsembleSpec
from ergolab.entropy import (
    DEFAULT_RHO,
    GridResolutionError,
    bowen_ball_volume,
    gibbs_residual,
    max_separated_set,
    pesin_check,
    u_entropy_estimate,
)
from ergolab.torus_maps import apply_anosov, torus_distance, TorusPoint2

LAM = 2.0 + math.sqrt(3.0)
LOG_LAM = math.log(LAM)


def segment2(length=0.1):
    return EnsembleSpec("unstable_segment", 1, dimension=2, base=(0.15, 0.4),
                        length=length)


def segment3(t=0.0, length=0.1):
    return EnsembleSpec("unstable_segment", 1, dimension=3, base=(0.15, 0.4, t),
                        length=length)


def orbit_distance(spec, seg, p, q, n):
    """Independent d_n: max over k = 0..n of the torus distance of iterates."""
    ex, ey = spec.matrix.unstable_direction
    a = TorusPoint2(seg.base[0] + p * ex, seg.base[1] + p * ey)
    b = TorusPoint2(seg.base[0] + q * ex, seg.base[1] + q * ey)
    worst = 0.0
    for _ in range(n + 1):
        worst = max(worst, torus_distance((a.x1, a.x2), (b.x1, b.x2)))
        a = apply_anosov(spec.matrix, a)
        b = apply_anosov(spec.matrix, b)
    return worst


def test_zero_step_set_packs_the_segment(anosov2d):
    res = max_separated_set(anosov2d, segment2(), 0)
    assert res.cardinality == 5  # floor(length / rho)
    assert res.min_gap >= DEFAULT_RHO - 1e-12
    assert res.pairwise_verified and res.maximality_verified
    assert np.all(np.diff(res.params) > 0)
    assert res.cardinality == res.params.size
    assert res.log_cardinality == math.log(5)


def test_small_set_against_full_pairwise_oracle(anosov2d):
    """Re-verify every pair and probe maximality with independent arithmetic."""
    seg = segment2()
    res = max_separated_set(anosov2d, seg, 1)
    ps = res.params
    assert res.cardinality == ps.size
    for i in range(ps.size):
        for j in range(i + 1, ps.size):
            assert orbit_distance(anosov2d, seg, ps[i], ps[j], 1) >= DEFAULT_RHO - 1e-12
    # no further point can be admitted anywhere on the segment
    for q in (np.arange(400) + 0.5) / 400 * seg.length:
        nearest = min(orbit_distance(anosov2d, seg, q, p, 1) for p in ps)
        assert nearest <= DEFAULT_RHO + 1e-12


def test_cardinality_grows_at_the_expansion_rate(anosov2d):
    cards = [max_separated_set(anosov2d, segment2(), n).cardinality
             for n in (3, 4, 5, 6)]
    for a, b in zip(cards, cards[1:]):
        assert b / a == pytest.approx(LAM, rel=0.1)


def test_cardinality_monotone_in_rho(anosov2d):
    coarse = max_separated_set(anosov2d, segment2(), 4, rho=0.04).cardinality
    fine = max_separated_set(anosov2d, segment2(), 4, rho=0.02).cardinality
    assert coarse <= fine


def test_entropy_slope_matches_log_lambda(anosov2d):
    results = []
    slope = u_entropy_estimate(anosov2d, segment2(), DEFAULT_RHO,
                               [3, 4, 5, 6, 7, 8], results=results)
    assert slope == pytest.approx(LOG_LAM, rel=0.01)
    assert len(results) == 6
    assert all(r.pairwise_verified and r.maximality_verified for r in results)


def test_skew_segments_live_on_invariant_tori(compactified3d, control, anosov2d):
    # on t = 0 and t = 1/2 the fiber coordinate is frozen, so counts match
    # the base automorphism; off those circles the metric would be wrong
    base_card = max_separated_set(anosov2d, segment2(), 3).cardinality
    for t in (0.0, 0.5):
        res = max_separated_set(compactified3d, segment3(t), 3)
        assert res.cardinality == base_card
    with pytest.raises(ValueError):
        max_separated_set(compactified3d, segment3(0.25), 3)
    # the control fiber is autonomous: any height is invariant enough
    res = max_separated_set(control, segment3(0.3), 3)
    assert res.cardinality == base_card


def test_feasibility_guards(anosov2d, compactified3d):
    seg = segment2()
    with pytest.raises(ValueError):
        max_separated_set(anosov2d, seg, -1)
    with pytest.raises(ValueError):
        max_separated_set(anosov2d, seg, 3, rho=0.6)
    with pytest.raises(ValueError):
        max_separated_set(anosov2d, seg, 3, rho=0.2)  # above 1/(2 lambda)
    with pytest.raises(ValueError):
        max_separated_set(anosov2d, segment2(length=0.3), 3)
    with pytest.raises(ValueError):
        max_separated_set(anosov2d, seg, 12)  # point budget
    with pytest.raises(ValueError):
        max_separated_set(anosov2d, EnsembleSpec("grid", 25), 3)
    with pytest.raises(ValueError):
        max_separated_set(compactified3d, segment2(), 3)  # needs dimension 3
    assert issubclass(GridResolutionError, RuntimeError)


def test_entropy_slope_preconditions(anosov2d):
    with pytest.raises(ValueError):
        u_entropy_estimate(anosov2d, segment2(), DEFAULT_RHO, [3, 4, 5])
    with pytest.raises(ValueError):
        u_entropy_estimate(anosov2d, segment2(), DEFAULT_RHO, [3, 4, 4, 5])


def test_bowen_ball_length_closed_form(anosov2d):
    """Interior balls are exactly 2 rho lambda^-n long (uniform expansion)."""
    for n in (2, 3, 4, 5):
        length = bowen_ball_volume(anosov2d, segment2(), 0.05, n)
        assert length == pytest.approx(2.0 * DEFAULT_RHO * LAM ** (-n), rel=1e-9)
    ratios = [bowen_ball_volume(anosov2d, segment2(), 0.05, n + 1)
              / bowen_ball_volume(anosov2d, segment2(), 0.05, n)
              for n in (2, 3, 4)]
    for r in ratios:
        assert r == pytest.approx(1.0 / LAM, rel=0.05)
    with pytest.raises(ValueError):
        bowen_ball_volume(anosov2d, segment2(), 0.2, 3)  # center off segment


def test_packing_covering_duality(anosov2d):
    # N(n, rho) Bowen balls of the same rho tile the segment up to O(1)
    for n in (3, 4, 5):
        card = max_separated_set(anosov2d, segment2(), n).cardinality
        ball = bowen_ball_volume(anosov2d, segment2(), 0.05, n)
        assert 0.2 < card * ball / 0.1 < 5.0


def test_gibbs_residual_vanishes(anosov2d):
    g = gibbs_residual(anosov2d, segment2(), DEFAULT_RHO, [3, 4, 5, 6])
    assert g.jacobian_integral == pytest.approx(LOG_LAM, abs=1e-9)
    assert -0.15 <= g.residual <= 0.05
    assert g.residual == g.entropy_estimate - g.jacobian_integral


def test_pesin_margin_anosov(anosov2d):
    rep = pesin_check(anosov2d, segment2(), DEFAULT_RHO, [3, 4, 5, 6],
                      subspace="unstable")
    assert abs(rep.margin) < 0.15
    full = pesin_check(anosov2d, segment2(), DEFAULT_RHO, [3, 4, 5, 6],
                       subspace="full")
    assert full.jacobian_integral == 0.0  # area preserving
    assert full.margin == full.entropy_estimate
    assert full.to_dict()["margin"] == full.margin


def test_pesin_margin_control_recovers_fiber_contraction(control):
    """With F = unstable + fiber the Jacobian drops by the sink rate, so the
    margin climbs to +2 pi kappa."""
    rep = pesin_check(control, segment3(0.3), DEFAULT_RHO, [3, 4, 5, 6],
                      subspace="unstable_fiber", orbit_length=100000)
    target = 2.0 * math.pi * control.control_rate
    assert rep.margin >= 0.9 * target
    assert rep.margin == pytest.approx(target, abs=0.05)
    assert rep.subspace == "unstable_fiber"


def test_pesin_subspace_validation(anosov2d, compactified3d, control):
    with pytest.raises(ValueError):
        pesin_check(anosov2d, segment2(), DEFAULT_RHO, [3, 4, 5, 6],
                    subspace="unstable_fiber")
    with pytest.raises(ValueError):
        pesin_check(control, segment3(0.3), DEFAULT_RHO, [3, 4, 5, 6],
                    subspace="full")
    with pytest.raises(ValueError):
        pesin_check(anosov2d, segment2(), DEFAULT_RHO, [3, 4, 5, 6],
                    subspace="everything")
    rep = pesin_check(compactified3d, segment3(0.0), DEFAULT_RHO, [3, 4, 5, 6],
                      subspace="unstable_fiber", orbit_length=50000)
    assert abs(rep.margin) < 0.15  # fiber exponent vanishes on the skew system
