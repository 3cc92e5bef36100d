"""Lyapunov exponents: exact spectra, telescoping, and domination margins."""

import math

import pytest

from ergolab.lyapunov import (
    center_exponent_trace,
    domination_diagnostic,
    spectrum_trace,
)
from ergolab.torus_maps import (
    AnosovMatrix,
    TorusPoint2,
    TorusPoint3,
    apply_anosov,
    apply_system,
    default_system,
    fiber_derivative,
)

LOG_LAMBDA = math.log(2.0 + math.sqrt(3.0))


@pytest.mark.parametrize("a,b,c,d", [(3, 1, 2, 1), (2, 1, 1, 1), (5, 3, 3, 2)])
def test_spectrum_anosov2d_is_plus_minus_log_lambda(a, b, c, d):
    # the cocycle is constant, so after the QR frame aligns every step
    # contributes exactly log lambda_u
    spec = default_system("anosov2d")
    spec = type(spec)("anosov2d", AnosovMatrix(a, b, c, d), phi=spec.phi)
    rates = spectrum_trace(spec, TorusPoint2(0.3, 0.7), 5000)
    assert rates[0] == pytest.approx(spec.matrix.log_expansion, abs=1e-9)
    assert rates[1] == pytest.approx(-spec.matrix.log_expansion, abs=1e-9)
    assert rates[0] + rates[1] == pytest.approx(0.0, abs=1e-12)


def test_spectrum_compactified_structure(compactified3d):
    start = TorusPoint3(TorusPoint2(0.3, 0.7), 0.37)
    rates = spectrum_trace(compactified3d, start, 20000)
    assert rates == sorted(rates, reverse=True)
    assert rates[0] == pytest.approx(LOG_LAMBDA, abs=1e-6)
    assert rates[2] == pytest.approx(-LOG_LAMBDA, abs=1e-6)
    # finite-time center exponent decays like sigma / sqrt(n)
    assert abs(rates[1]) < 0.05


def test_spectrum_control_middle_rate_is_sink_rate(control):
    """Orbits collapse onto t = 0, so the middle exponent is log r'(0)."""
    start = TorusPoint3(TorusPoint2(0.3, 0.7), 0.37)
    rates = spectrum_trace(control, start, 5000)
    assert rates[1] == pytest.approx(-2.0 * math.pi * control.control_rate, abs=1e-9)
    assert rates[0] == pytest.approx(LOG_LAMBDA, abs=1e-9)
    assert rates[2] == pytest.approx(-LOG_LAMBDA, abs=1e-9)


def test_spectrum_preconditions(compactified3d):
    start = TorusPoint3(TorusPoint2(0.3, 0.7), 0.37)
    with pytest.raises(ValueError):
        spectrum_trace(compactified3d, start, 50)
    with pytest.raises(ValueError):
        spectrum_trace(compactified3d, start, 1000, burn_in=-1)
    with pytest.raises(ValueError):
        spectrum_trace(compactified3d, TorusPoint2(0.3, 0.7), 1000)


def test_center_trace_telescopes_against_stepwise_oracle(compactified3d):
    """The kernel's accumulated log sums match a pure-Python orbit walk.

    Both iterate the base map with identical arithmetic; the fiber charts
    differ, so agreement is additive-roundoff tight rather than bitwise.
    """
    start = TorusPoint3(TorusPoint2(0.3, 0.7), 0.37)
    n = 200
    trace = center_exponent_trace(compactified3d, start, n,
                                  checkpoints=list(range(1, n + 1)))
    x = start
    acc = 0.0
    for i in range(n):
        s = compactified3d.phi.value(x.base)
        acc += math.log(fiber_derivative(compactified3d.field, s, x.t))
        assert trace.log_sums[i] == pytest.approx(acc, abs=1e-12)
        x = apply_system(compactified3d, x)
    assert trace.lambda_c[-1] == pytest.approx(acc / n, abs=1e-12)


def test_center_trace_on_invariant_circles(compactified3d):
    # at t = 0 the per-step rate linearizes to +2 pi c phi(x); at t = 1/2
    # the sign flips, so the log sums are exact Birkhoff sums of phi
    tw = 2.0 * math.pi * compactified3d.field.amplitude
    for t0, sign in ((0.0, 1.0), (0.5, -1.0)):
        trace = center_exponent_trace(compactified3d, TorusPoint3(TorusPoint2(0.3, 0.7), t0),
                                      50, checkpoints=list(range(1, 51)))
        x = TorusPoint2(0.3, 0.7)
        acc = 0.0
        for i in range(50):
            acc += sign * tw * compactified3d.phi.value(x)
            assert trace.log_sums[i] == pytest.approx(acc, abs=1e-12)
            x = apply_anosov(compactified3d.matrix, x)


def test_center_exponent_decays_to_zero(compactified3d):
    start = TorusPoint3(TorusPoint2(0.3, 0.7), 0.37)
    trace = center_exponent_trace(compactified3d, start, 100000)
    assert abs(trace.final) < 2e-3


def test_control_center_exponent(control):
    rate = -2.0 * math.pi * control.control_rate
    on_sink = center_exponent_trace(control, TorusPoint3(TorusPoint2(0.3, 0.7), 0.0), 100)
    assert on_sink.final == pytest.approx(rate, abs=1e-12)
    # generic starts converge exponentially fast, so the transient is O(1/n)
    generic = center_exponent_trace(control, TorusPoint3(TorusPoint2(0.3, 0.7), 0.37), 100000)
    assert generic.final == pytest.approx(rate, abs=1e-4)


def test_center_trace_checkpoint_handling(compactified3d):
    start = TorusPoint3(TorusPoint2(0.3, 0.7), 0.37)
    trace = center_exponent_trace(compactified3d, start, 100, checkpoints=[100, 10, 100])
    assert trace.ns.tolist() == [10, 100]
    assert trace.rows() == list(zip(trace.ns.tolist(), trace.lambda_c.tolist()))
    assert trace.final == trace.lambda_c[-1]
    with pytest.raises(ValueError):
        center_exponent_trace(compactified3d, start, 100, checkpoints=[10, 50])
    with pytest.raises(ValueError):
        center_exponent_trace(compactified3d, start, 0)


def test_center_trace_rejects_variants_without_fiber(anosov2d):
    with pytest.raises(ValueError):
        center_exponent_trace(anosov2d, TorusPoint3(TorusPoint2(0.1, 0.2), 0.3), 100)


def test_domination_margin_default_amplitude(compactified3d):
    diag = domination_diagnostic(compactified3d)
    assert diag.holds
    analytic = LOG_LAMBDA - 2.0 * math.pi * 0.05 * compactified3d.phi.sup_bound()
    assert diag.analytic_margin == pytest.approx(analytic, abs=1e-12)
    # the sampled sup of |phi| cannot exceed the true sup
    assert diag.margin >= diag.analytic_margin - 1e-12
    assert diag.cone_angle_max < math.pi / 4.0


def test_domination_fails_at_large_amplitude():
    wide = default_system("compactified3d", amplitude=1.0)
    diag = domination_diagnostic(wide)
    assert not diag.holds
    assert diag.margin < 0.0
    assert diag.analytic_margin < 0.0


def test_domination_rejects_other_variants(anosov2d, control):
    with pytest.raises(ValueError):
        domination_diagnostic(anosov2d)
    with pytest.raises(ValueError):
        domination_diagnostic(control)
