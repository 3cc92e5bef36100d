"""Lorenz flow: integrators against each other, exact symmetries, averages,
deviation ensembles, and the step-halving order check."""

import math

import numpy as np
import pytest

from ergolab.lorenz import (
    DivergenceError,
    FlowSpec,
    OBSERVABLE_LIBRARY,
    flow_average,
    flow_deviation,
    integrate,
    rk4_order_check,
    sample_flow_starts,
)

FLOW = FlowSpec()
START = (2.0, 1.0, 25.0)


def test_flow_spec_validation_and_roundtrip():
    with pytest.raises(ValueError):
        FlowSpec(h=0.0)
    with pytest.raises(ValueError):
        FlowSpec(method="euler")
    with pytest.raises(ValueError):
        FlowSpec(tolerance=0.0)
    with pytest.raises(ValueError):
        FlowSpec(guard=-1.0)
    spec = FlowSpec(h=5e-4, method="rk45-adaptive", tolerance=1e-9)
    assert FlowSpec.from_dict(spec.to_dict()) == spec


def test_equilibria_are_stationary():
    # the origin and both wing centers C+- are exact fixed points, and RK4
    # evaluates to an exact zero step there
    c = math.sqrt(FLOW.beta * (FLOW.rho - 1.0))
    for x0 in ((0.0, 0.0, 0.0), (c, c, FLOW.rho - 1.0), (-c, -c, FLOW.rho - 1.0)):
        traj = integrate(FLOW, x0, 1.0, stride=100)
        assert np.array_equal(traj.final, np.asarray(x0))


def test_orbit_stays_in_trapping_region():
    traj = integrate(FLOW, START, 1000.0, stride=100)
    assert np.max(np.linalg.norm(traj.states, axis=1)) < 100.0
    assert traj.times[-1] == pytest.approx(1000.0)


def test_rk4_agrees_with_adaptive_rk45():
    a = integrate(FLOW, START, 5.0, stride=100)
    b = integrate(FlowSpec(method="rk45-adaptive", tolerance=1e-10), START, 5.0,
                  stride=100)
    assert np.allclose(a.times, b.times, atol=1e-12)
    assert np.max(np.linalg.norm(a.states - b.states, axis=1)) < 1e-4


def test_wing_symmetry_is_exact():
    """(x, y, z) -> (-x, -y, z) commutes with the flow and with RK4 bitwise."""
    plus = integrate(FLOW, (2.0, 1.0, 25.0), 2.0)
    minus = integrate(FLOW, (-2.0, -1.0, 25.0), 2.0)
    assert np.array_equal(plus.states * np.array([-1.0, -1.0, 1.0]), minus.states)


def test_divergence_guard():
    with pytest.raises(DivergenceError):
        integrate(FlowSpec(guard=10.0), START, 1.0)
    with pytest.raises(DivergenceError):
        flow_average(FlowSpec(guard=10.0), START, "z", 1.0)
    with pytest.raises(DivergenceError):
        flow_deviation(FlowSpec(guard=10.0), np.array([START]), "z", 1.0, [1],
                       reference=23.55)


def test_trajectory_sampling_and_validation():
    traj = integrate(FLOW, START, 1.0, stride=10)
    assert np.allclose(np.diff(traj.times), 10 * FLOW.h)
    assert np.array_equal(traj.final, traj.states[-1])
    with pytest.raises(ValueError):
        integrate(FLOW, START, 0.0)
    with pytest.raises(ValueError):
        integrate(FLOW, START, 1.0, stride=0)
    with pytest.raises(ValueError):
        integrate(FLOW, (1.0, 2.0), 1.0)
    with pytest.raises(ValueError):
        integrate(FLOW, (1.0, 2.0, math.nan), 1.0)


def test_flow_average_is_the_trapezoid_rule():
    avg = flow_average(FLOW, START, "z", 5.0)
    traj = integrate(FLOW, START, 5.0)
    trap = np.trapezoid(traj.states[:, 2], traj.times) / traj.times[-1]
    assert avg.value == pytest.approx(trap, abs=1e-12)
    assert avg.value == avg.series[-1]
    assert avg.T == pytest.approx(traj.times[-1])


def test_flow_average_checkpoints_and_constant_observable():
    avg = flow_average(FLOW, START, "one", 3.0, checkpoints=[1.0, 2.0, 3.0])
    assert np.array_equal(avg.times, np.array([1.0, 2.0, 3.0]))
    assert np.allclose(avg.series, 1.0, atol=1e-12)  # integral of 1 is exact
    with pytest.raises(ValueError):
        flow_average(FLOW, START, "z", 3.0, checkpoints=[1.0, 5.0])
    with pytest.raises(ValueError):
        flow_average(FLOW, START, "z", 3.0, checkpoints=[0.0])


def test_observable_parser():
    avg = flow_average(FLOW, START, "bump:25:5", 1.0)
    assert 0.0 < avg.value <= 1.0
    for bad in ("bump:25", "bump:25:0", "w"):
        with pytest.raises(ValueError):
            flow_average(FLOW, START, bad, 1.0)
    assert set(OBSERVABLE_LIBRARY) == {"x", "y", "z", "abs2", "one"}


def test_long_run_z_average():
    avg = flow_average(FLOW, START, "z", 2000.0)
    assert avg.value == pytest.approx(23.55, abs=0.5)


def test_sample_flow_starts_box_and_determinism():
    pts = sample_flow_starts(70000, seed=3)
    assert pts.shape == (70000, 3)
    assert np.all(pts[:, 0] >= -15.0) and np.all(pts[:, 0] < 15.0)
    assert np.all(pts[:, 2] >= 5.0) and np.all(pts[:, 2] < 45.0)
    assert np.array_equal(pts, sample_flow_starts(70000, seed=3))
    head = sample_flow_starts(65536, seed=3)
    assert np.array_equal(pts[:65536], head)
    with pytest.raises(ValueError):
        sample_flow_starts(0)
    with pytest.raises(ValueError):
        sample_flow_starts(10, lo=(0, 0, 0), hi=(0, 1, 1))


def test_flow_deviation_counts_match_per_start_averages():
    starts = sample_flow_starts(200, seed=3)
    rep = flow_deviation(FLOW, starts, "z", 2.0, [1, 2], reference=23.55)
    assert rep.curve.total == 200
    assert rep.reference_se == 0.0 and not rep.reference_flagged
    recount = np.zeros(2, dtype=int)
    for s in starts:
        series = flow_average(FLOW, s, "z", 2.0, checkpoints=[1.0, 2.0]).series
        recount += np.abs(series - 23.55) >= 2.0
    assert np.array_equal(rep.curve.counts, recount)
    # longer averaging windows can only help concentration at this scale
    assert rep.curve.counts[1] <= rep.curve.counts[0]


def test_flow_deviation_flags_epsilon_near_baseline_noise():
    starts = sample_flow_starts(50, seed=3)
    rep = flow_deviation(FLOW, starts, "z", 0.5, [1, 2], reference_T=200.0)
    assert rep.reference_se > 0.0
    assert rep.reference_flagged == (0.5 < 5.0 * rep.reference_se)
    assert rep.reference == pytest.approx(23.55, abs=1.0)
    d = rep.to_dict()
    assert d["curve"]["total"] == 50 and d["observable"] == "z"


def test_flow_deviation_validation():
    starts = np.array([START])
    with pytest.raises(ValueError):
        flow_deviation(FLOW, starts, "z", 0.0, [1], reference=23.55)
    with pytest.raises(ValueError):
        flow_deviation(FLOW, starts, "z", 1.0, [], reference=23.55)
    with pytest.raises(ValueError):
        flow_deviation(FLOW, starts, "z", 1.0, [1.5], reference=23.55)
    with pytest.raises(ValueError):
        flow_deviation(FLOW, np.zeros((4, 2)), "z", 1.0, [1], reference=23.55)


def test_rk4_order_check_in_calibrated_band(cal):
    ratio = rk4_order_check(FLOW)
    assert cal["lorenz"]["rk4_ratio_lo"] < ratio < cal["lorenz"]["rk4_ratio_hi"]
