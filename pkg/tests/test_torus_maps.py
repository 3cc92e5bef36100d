"""Exact-arithmetic and closed-form oracles for the four torus systems."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from ergolab.torus_maps import (AnosovMatrix, CircleField, Observable,
                                SystemSpec, TorusPoint2, TorusPoint3,
                                apply_anosov, apply_skew, apply_system,
                                conjugacy_h, default_matrix,
                                default_observable, default_system, eval_phi,
                                fiber_derivative, fixed_points, flow_circle,
                                inverse_anosov, inverse_skew, inverse_system,
                                involution, mod1, rationally_independent,
                                tangent_matrix, torus_distance)

SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# base map

def test_apply_anosov_integer_arithmetic():
    m = default_matrix()
    assert apply_anosov(m, TorusPoint2(0.0, 0.0)) == TorusPoint2(0.0, 0.0)
    assert apply_anosov(m, TorusPoint2(0.5, 0.0)) == TorusPoint2(0.5, 0.0)
    p = apply_anosov(m, TorusPoint2(0.25, 0.5))
    assert (p.x1, p.x2) == (0.25, 0.0)


def test_anosov_inverse_roundtrip():
    m = default_matrix()
    rng = np.random.default_rng(7)
    for x1, x2 in rng.random((200, 2)):
        p = TorusPoint2(x1, x2)
        q = inverse_anosov(m, apply_anosov(m, p))
        assert torus_distance(p.as_array(), q.as_array()) < 1e-12


def _brute_force_fixed_points(m: AnosovMatrix):
    """Independent lattice oracle: (A-I)x = k over integer k, x on the torus."""
    ai = np.array([[m.a - 1, m.b], [m.c, m.d - 1]], dtype=float)
    det = round(np.linalg.det(ai))
    assert det != 0
    inv = np.linalg.inv(ai)
    found = set()
    bound = abs(m.a) + abs(m.b) + abs(m.c) + abs(m.d) + 2
    for k1 in range(-bound, bound + 1):
        for k2 in range(-bound, bound + 1):
            x = (inv @ (k1, k2)) % 1.0
            key = (round(x[0] * abs(det)) % abs(det),
                   round(x[1] * abs(det)) % abs(det))
            img = (np.array([[m.a, m.b], [m.c, m.d]]) @ x) % 1.0
            if torus_distance(img, x) < 1e-9:
                found.add(key)
    return found


@pytest.mark.parametrize("entries,count", [
    ((3, 1, 2, 1), 2),
    ((2, 1, 1, 1), 1),
    ((5, 3, 3, 2), 5),
])
def test_fixed_point_counts(entries, count):
    m = AnosovMatrix(*entries)
    pts = fixed_points(m)
    assert len(pts) == count
    assert len(pts) == abs(round(np.linalg.det(
        np.array([[m.a - 1, m.b], [m.c, m.d - 1]]))))
    assert len(_brute_force_fixed_points(m)) == count
    for p in pts:
        q = apply_anosov(m, p)
        assert torus_distance(p.as_array(), q.as_array()) < 1e-9


def test_fixed_points_default_matrix_locations():
    pts = {(p.x1, p.x2) for p in fixed_points(default_matrix())}
    assert pts == {(0.0, 0.0), (0.5, 0.0)}


def test_fixed_point_counts_random_hyperbolic_matrices():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 10:
        a, b, c = (int(v) for v in rng.integers(-4, 5, size=3))
        if b == 0:
            continue
        # force det 1 when (ad - bc) = 1 has an integer solution for d
        if c == 0 or b * c % max(a, 1):
            pass
        for d in range(-4, 5):
            det = a * d - b * c
            if det in (1, -1) and abs(a + d) > 2:
                m = AnosovMatrix(a, b, c, d)
                assert len(fixed_points(m)) == len(_brute_force_fixed_points(m))
                checked += 1
                break


def test_lebesgue_preservation_chi_square():
    m = default_matrix()
    rng = np.random.default_rng(3)
    pts = rng.random((1_000_000, 2))
    mat = np.array([[m.a, m.b], [m.c, m.d]], dtype=float)
    image = (pts @ mat.T) % 1.0
    cells = (np.floor(image[:, 0] * 32).astype(int) * 32
             + np.floor(image[:, 1] * 32).astype(int))
    counts = np.bincount(cells, minlength=1024)
    assert stats.chisquare(counts).pvalue > 0.001


def test_anosov_matrix_eigen_structure():
    m = default_matrix()
    lam_u, lam_s = m.eigenvalues
    assert lam_u == pytest.approx(2.0 + math.sqrt(3.0), abs=1e-12)
    assert lam_s == pytest.approx(2.0 - math.sqrt(3.0), abs=1e-12)
    assert m.log_expansion == pytest.approx(math.log(2.0 + math.sqrt(3.0)))
    assert abs(m.det) == 1


def test_anosov_matrix_rejects_non_hyperbolic():
    with pytest.raises(ValueError):
        AnosovMatrix(1, 1, 0, 1)  # |trace| = 2, not hyperbolic
    with pytest.raises(ValueError):
        AnosovMatrix(2, 0, 0, 2)  # det 4, not invertible on the torus


# ---------------------------------------------------------------------------
# observable

def test_eval_phi_fixed_point_values():
    phi = default_observable()
    assert eval_phi(phi, TorusPoint2(0.0, 0.0)) == pytest.approx(1 + SQRT2, abs=1e-14)
    assert eval_phi(phi, TorusPoint2(0.5, 0.0)) == pytest.approx(-1 + SQRT2, abs=1e-14)
    assert rationally_independent(1 + SQRT2, -1 + SQRT2)
    assert not rationally_independent(1.5, 3.0)


def test_phi_zero_mean_monte_carlo():
    phi = default_observable()
    rng = np.random.default_rng(5)
    vals = phi.value_array(rng.random((100_000, 2)))
    se = vals.std() / math.sqrt(vals.size)
    assert abs(vals.mean()) < 5 * se


def test_observable_rejects_constant_term():
    with pytest.raises(ValueError):
        Observable((((0, 0), "cos", 1.0),))


# ---------------------------------------------------------------------------
# circle flow

def _rk4_flow(c, s, t0, steps=10_000):
    h = s / steps
    t = t0
    for _ in range(steps):
        k1 = c * math.sin(2 * math.pi * t)
        k2 = c * math.sin(2 * math.pi * (t + 0.5 * h * k1))
        k3 = c * math.sin(2 * math.pi * (t + 0.5 * h * k2))
        k4 = c * math.sin(2 * math.pi * (t + h * k3))
        t += h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    return t


def test_flow_circle_against_rk4_oracle():
    field = CircleField(0.05)
    value = flow_circle(field, 1.0, 0.25)
    assert 0.25 < value < 0.5
    assert value == pytest.approx(_rk4_flow(0.05, 1.0, 0.25), abs=1e-8)
    # and on the mirrored half, where the odd symmetry is exercised
    assert flow_circle(field, 0.8, 0.7) == pytest.approx(
        _rk4_flow(0.05, 0.8, 0.7), abs=1e-8)


def test_flow_circle_fixed_points_and_identity():
    field = CircleField(0.05)
    for s in (-3.0, -0.5, 0.0, 1.0, 4.7):
        assert flow_circle(field, s, 0.0) == 0.0
        assert flow_circle(field, s, 0.5) == 0.5
    for t0 in np.linspace(0.0, 0.999, 37):
        assert flow_circle(field, 0.0, t0) == pytest.approx(t0, abs=1e-15)


@given(s=st.floats(-5, 5), s2=st.floats(-5, 5))
def test_flow_law(s, s2):
    field = CircleField(0.05)
    for t0 in np.linspace(0.0, 0.99, 100):
        direct = flow_circle(field, s + s2, t0)
        chained = flow_circle(field, s, flow_circle(field, s2, t0))
        assert abs(direct - chained) < 1e-9


def test_fiber_derivative_at_fixed_points():
    c = 0.05
    field = CircleField(c)
    for s in (-2.0, 0.3, 1.0, 5.0):
        assert fiber_derivative(field, s, 0.0) == pytest.approx(
            math.exp(2 * math.pi * c * s), rel=1e-12)
        assert fiber_derivative(field, s, 0.5) == pytest.approx(
            math.exp(-2 * math.pi * c * s), rel=1e-12)


def test_fiber_derivative_finite_difference():
    field = CircleField(0.05)
    s, t0, eps = 0.7, 0.3, 1e-6
    fd = (flow_circle(field, s, t0 + eps) - flow_circle(field, s, t0 - eps)) / (2 * eps)
    assert fiber_derivative(field, s, t0) == pytest.approx(fd, abs=1e-6)


@given(s=st.floats(-4, 4), s2=st.floats(-4, 4),
       t0=st.floats(0.0, 0.999))
def test_fiber_derivative_chain_rule(s, s2, t0):
    field = CircleField(0.05)
    left = fiber_derivative(field, s + s2, t0)
    right = (fiber_derivative(field, s, flow_circle(field, s2, t0))
             * fiber_derivative(field, s2, t0))
    assert abs(left - right) < 1e-8
    assert left > 0


def test_circle_field_requires_positive_amplitude():
    with pytest.raises(ValueError):
        CircleField(0.0)
    with pytest.raises(ValueError):
        CircleField(-0.1)


# ---------------------------------------------------------------------------
# 3D systems

def test_apply_system_fixed_point(compactified3d):
    p = TorusPoint3(TorusPoint2(0.0, 0.0), 0.0)
    q = apply_system(compactified3d, p)
    assert (q.base.x1, q.base.x2, q.t) == (0.0, 0.0, 0.0)


def test_involution_equivariance(compactified3d):
    rng = np.random.default_rng(13)
    for x1, x2, t in rng.random((2000, 3)):
        p = TorusPoint3(TorusPoint2(x1, x2), t)
        a = apply_system(compactified3d, involution(p))
        b = involution(apply_system(compactified3d, p))
        assert torus_distance(a.as_array(), b.as_array()) < 1e-12


def test_square_conjugate_to_skew_square(compactified3d, skew_unbounded):
    """f^2 = h o g^2 o h^{-1} through h(x,s) = (x, Phi_s(1/4))."""
    field = compactified3d.field
    rng = np.random.default_rng(17)
    worst = 0.0
    for x1, x2, s in rng.random((2000, 3)):
        s = (s - 0.5) * 8.0
        x = TorusPoint2(x1, x2)
        p = conjugacy_h(field, x, s)
        ff = apply_system(compactified3d, apply_system(compactified3d, p))
        gx, gs = apply_skew(skew_unbounded, x, s)
        ggx, ggs = apply_skew(skew_unbounded, gx, gs)
        q = conjugacy_h(field, ggx, ggs)
        worst = max(worst, torus_distance(ff.as_array(), q.as_array()))
    assert worst < 1e-9


def test_apply_system_inverse_roundtrip():
    rng = np.random.default_rng(19)
    for variant in ("compactified3d", "morse_smale_control"):
        spec = default_system(variant)
        for x1, x2, t in rng.random((10_000, 3)):
            p = TorusPoint3(TorusPoint2(x1, x2), t)
            q = inverse_system(spec, apply_system(spec, p))
            assert torus_distance(p.as_array(), q.as_array()) < 1e-10


def test_control_fiber_map_independent_of_base(control):
    rng = np.random.default_rng(23)
    t = 0.37
    reference = apply_system(control, TorusPoint3(TorusPoint2(0.0, 0.0), t)).t
    for x1, x2 in rng.random((50, 2)):
        p = TorusPoint3(TorusPoint2(x1, x2), t)
        assert apply_system(control, p).t == reference
        assert tangent_matrix(control, p)[2, 2] == pytest.approx(
            tangent_matrix(control, TorusPoint3(TorusPoint2(0.0, 0.0), t))[2, 2],
            rel=1e-14)


# ---------------------------------------------------------------------------
# unbounded skew

def test_skew_fixed_point_drift(skew_unbounded):
    p = TorusPoint2(0.0, 0.0)
    t = 0.0
    for n in range(1, 31):
        p, t = apply_skew(skew_unbounded, p, t)
        assert t == pytest.approx(n * (1 + SQRT2), rel=1e-12)
        assert (p.x1, p.x2) == (0.0, 0.0)


def test_skew_fiber_telescoping(skew_unbounded):
    rng = np.random.default_rng(29)
    phi = skew_unbounded.phi
    for x1, x2 in rng.random((20, 2)):
        p = TorusPoint2(x1, x2)
        q, t = p, 0.0
        birkhoff = 0.0
        for _ in range(25):
            birkhoff += eval_phi(phi, q)
            q, t = apply_skew(skew_unbounded, q, t)
        assert t == pytest.approx(birkhoff, abs=1e-9)


def test_skew_inverse_roundtrip(skew_unbounded):
    rng = np.random.default_rng(31)
    for x1, x2, t in rng.random((200, 3)):
        p = TorusPoint2(x1, x2)
        q, s = apply_skew(skew_unbounded, p, t * 10 - 5)
        p2, t2 = inverse_skew(skew_unbounded, q, s)
        assert torus_distance(p.as_array(), p2.as_array()) < 1e-12
        assert t2 == pytest.approx(t * 10 - 5, abs=1e-12)


# ---------------------------------------------------------------------------
# conventions and serialization

def test_mod1_near_one_convention():
    assert mod1(1.0 - 1e-16) == 0.0
    assert mod1(0.999999) == pytest.approx(0.999999)
    assert mod1(-0.25) == 0.75
    assert mod1(3.25) == 0.25


def test_system_spec_json_roundtrip():
    for variant in ("anosov2d", "skew_unbounded", "compactified3d",
                    "morse_smale_control"):
        spec = default_system(variant)
        again = SystemSpec.from_json(spec.to_json())
        assert again == spec


def test_skew_phi_must_separate_fixed_points():
    # constant-at-fixed-points observable: phi(p) and phi(q) rationally dependent
    bad = Observable((((0, 1), "cos", 1.0),))  # value 1 at both fixed points
    with pytest.raises(ValueError):
        SystemSpec("compactified3d", default_matrix(), phi=bad,
                   field=CircleField(0.05))
