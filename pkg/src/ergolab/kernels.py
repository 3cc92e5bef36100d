"""Compiled inner loops for long-orbit scans.

Everything here is numba-compiled and purely numerical: Python-level modules
prepare plain arrays, call a kernel, and wrap the results.  Design notes that
matter for correctness:

* Fiber coordinates of the skew systems are evaluated through the flow's
  log-tangent chart a = log tan(pi t), where the circle flow is the linear
  shift a -> a + 2 pi c s.  Iterating the fiber recursion directly in t would
  saturate at the invariant circles once |a| exceeds ~700 (double precision)
  and never escape, silently destroying the long-run statistics; the chart
  representation follows the Birkhoff sum and always comes back.
* All long-running accumulators use Kahan compensated summation, so 1e8-step
  sums carry O(eps) error instead of O(n eps).
* fastmath stays off: results must be bit-reproducible across runs and
  worker counts.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = [
    "scan_skew_orbit",
    "center_scan",
    "spectrum_scan2",
    "spectrum_scan3",
    "birkhoff_partial_sums",
    "occupation_scan",
    "separated_greedy",
    "verify_adjacent_separation",
    "probe_maximality",
    "bowen_ball_length",
    "lorenz_trajectory",
    "lorenz_ensemble_averages",
    "FIBER_AT_ZERO",
    "FIBER_AT_HALF",
    "FIBER_GENERIC",
    "MODE_COMPACTIFIED",
    "MODE_CONTROL",
]

FIBER_AT_ZERO = 0
FIBER_AT_HALF = 1
FIBER_GENERIC = 2

MODE_COMPACTIFIED = 0
MODE_CONTROL = 1

_TWO_PI = 2.0 * math.pi


@njit(cache=True)
def _log1p_exp(w):
    """log(1 + e^w), stable for all w."""
    if w > 36.0:
        return w + math.exp(-w)
    if w < -36.0:
        return math.exp(w)
    return math.log1p(math.exp(w))


@njit(cache=True)
def _fiber_rep(a):
    """Representative fiber height in (0, 1/2) from the log-tangent chart."""
    if a <= 0.0:
        return math.atan(math.exp(a)) / math.pi
    return 0.5 - math.atan(math.exp(-a)) / math.pi


@njit(cache=True)
def _phi_eval(x, y, phik, phikind, phic):
    total = 0.0
    for j in range(phik.shape[0]):
        arg = _TWO_PI * (phik[j, 0] * x + phik[j, 1] * y)
        if phikind[j] == 0:
            total += phic[j] * math.cos(arg)
        else:
            total += phic[j] * math.sin(arg)
    return total


@njit(cache=True)
def _phi_grad(x, y, phik, phikind, phic):
    gx = 0.0
    gy = 0.0
    for j in range(phik.shape[0]):
        arg = _TWO_PI * (phik[j, 0] * x + phik[j, 1] * y)
        if phikind[j] == 0:
            s = -_TWO_PI * phic[j] * math.sin(arg)
        else:
            s = _TWO_PI * phic[j] * math.cos(arg)
        gx += s * phik[j, 0]
        gy += s * phik[j, 1]
    return gx, gy


@njit(cache=True)
def scan_skew_orbit(ma, mb, mc, md, phik, phikind, phic,
                    x0, y0, fiber_kind, lt0, mirror, twopic, mode,
                    chk, kfreq, max_norm):
    """Empirical sums of one 3D skew orbit at geometric checkpoints.

    Per visited point, accumulates the complex wave sums
    sum_i z1^{k1} z2^{k2} z3^{l} over the canonical frequency list ``kfreq``
    (z_j = e^{2 pi i coordinate}); cos/sin entry sums are the real/imaginary
    parts.  Fiber heights come from the log-tangent chart: the orbit of
    (x, t0) has t_i = sign_i * Phi_{D_i}(t0) with D_i the accumulated drive
    (Birkhoff sum of phi, or -kappa i for the control system) and sign_i the
    parity/mirror bookkeeping of the compactification's minus sign.

    Returns an (n_chk, n_canonical, 2) array of the Kahan-compensated wave
    sums snapshot at each checkpoint (last axis: real, imaginary).
    """
    n_chk = chk.shape[0]
    n_can = kfreq.shape[0]
    p = max_norm
    width = 2 * p + 1

    s_re = np.zeros(n_can)
    c_re = np.zeros(n_can)
    s_im = np.zeros(n_can)
    c_im = np.zeros(n_can)
    out = np.zeros((n_chk, n_can, 2))

    z1p_re = np.empty(width)
    z1p_im = np.empty(width)
    z2p_re = np.empty(width)
    z2p_im = np.empty(width)
    z3p_re = np.empty(width)
    z3p_im = np.empty(width)

    x = x0
    y = y0
    a = lt0
    sign = mirror
    ci = 0
    n_max = chk[n_chk - 1]

    for i in range(n_max):
        # fiber height representative and its wave
        if fiber_kind == FIBER_AT_ZERO:
            ang3 = 0.0
        elif fiber_kind == FIBER_AT_HALF:
            ang3 = math.pi  # 2 pi * 1/2
        else:
            ang3 = _TWO_PI * _fiber_rep(a)
        c3 = math.cos(ang3)
        s3 = sign * math.sin(ang3)

        c1 = math.cos(_TWO_PI * x)
        s1 = math.sin(_TWO_PI * x)
        c2 = math.cos(_TWO_PI * y)
        s2 = math.sin(_TWO_PI * y)

        # power tables z^k for k = -p..p (index k + p)
        z1p_re[p] = 1.0
        z1p_im[p] = 0.0
        z2p_re[p] = 1.0
        z2p_im[p] = 0.0
        z3p_re[p] = 1.0
        z3p_im[p] = 0.0
        for q in range(1, p + 1):
            z1p_re[p + q] = z1p_re[p + q - 1] * c1 - z1p_im[p + q - 1] * s1
            z1p_im[p + q] = z1p_re[p + q - 1] * s1 + z1p_im[p + q - 1] * c1
            z1p_re[p - q] = z1p_re[p + q]
            z1p_im[p - q] = -z1p_im[p + q]
            z2p_re[p + q] = z2p_re[p + q - 1] * c2 - z2p_im[p + q - 1] * s2
            z2p_im[p + q] = z2p_re[p + q - 1] * s2 + z2p_im[p + q - 1] * c2
            z2p_re[p - q] = z2p_re[p + q]
            z2p_im[p - q] = -z2p_im[p + q]
            z3p_re[p + q] = z3p_re[p + q - 1] * c3 - z3p_im[p + q - 1] * s3
            z3p_im[p + q] = z3p_re[p + q - 1] * s3 + z3p_im[p + q - 1] * c3
            z3p_re[p - q] = z3p_re[p + q]
            z3p_im[p - q] = -z3p_im[p + q]

        for j in range(n_can):
            k1 = kfreq[j, 0] + p
            k2 = kfreq[j, 1] + p
            l3 = kfreq[j, 2] + p
            ar = z1p_re[k1] * z2p_re[k2] - z1p_im[k1] * z2p_im[k2]
            ai = z1p_re[k1] * z2p_im[k2] + z1p_im[k1] * z2p_re[k2]
            wr = ar * z3p_re[l3] - ai * z3p_im[l3]
            wi = ar * z3p_im[l3] + ai * z3p_re[l3]
            # Kahan update, real part
            yv = wr - c_re[j]
            tv = s_re[j] + yv
            c_re[j] = (tv - s_re[j]) - yv
            s_re[j] = tv
            # imaginary part
            yv = wi - c_im[j]
            tv = s_im[j] + yv
            c_im[j] = (tv - s_im[j]) - yv
            s_im[j] = tv

        if i + 1 == chk[ci]:
            for j in range(n_can):
                out[ci, j, 0] = s_re[j] + c_re[j]
                out[ci, j, 1] = s_im[j] + c_im[j]
            ci += 1
            if ci == n_chk:
                break

        # advance
        if mode == MODE_COMPACTIFIED:
            w_step = twopic * _phi_eval(x, y, phik, phikind, phic)
            sign = -sign
        else:
            w_step = -twopic
        a += w_step
        xn = (ma * x + mb * y) % 1.0
        yn = (mc * x + md * y) % 1.0
        x = xn
        y = yn

    return out


@njit(cache=True)
def center_scan(ma, mb, mc, md, phik, phikind, phic,
                x0, y0, fiber_kind, lt0, twopic, mode, chk):
    """Accumulated log fiber derivative of one orbit at checkpoints.

    The fiber direction is exactly invariant, so the center growth over n
    steps is the sum of per-step log derivatives of the fiber maps.  In the
    log-tangent chart the step derivative is

        log d_i = w_i + log(1 + e^{2 a_i}) - log(1 + e^{2 (a_i + w_i)}),

    with w_i = 2 pi c phi(x_i) (compactified) or -2 pi kappa (control); on the
    invariant circles it degenerates to +-w_i (linearization).  Returns the
    Kahan-compensated partial sums at each checkpoint.
    """
    n_chk = chk.shape[0]
    out = np.zeros(n_chk)
    x = x0
    y = y0
    a = lt0
    acc = 0.0
    comp = 0.0
    ci = 0
    n_max = chk[n_chk - 1]

    for i in range(n_max):
        if mode == MODE_COMPACTIFIED:
            w_step = twopic * _phi_eval(x, y, phik, phikind, phic)
        else:
            w_step = -twopic

        if fiber_kind == FIBER_AT_ZERO:
            logd = w_step
        elif fiber_kind == FIBER_AT_HALF:
            logd = -w_step
        else:
            logd = w_step + _log1p_exp(2.0 * a) - _log1p_exp(2.0 * (a + w_step))

        yv = logd - comp
        tv = acc + yv
        comp = (tv - acc) - yv
        acc = tv

        a += w_step
        xn = (ma * x + mb * y) % 1.0
        yn = (mc * x + md * y) % 1.0
        x = xn
        y = yn

        if i + 1 == chk[ci]:
            out[ci] = acc + comp
            ci += 1
            if ci == n_chk:
                break

    return out


@njit(cache=True)
def spectrum_scan2(ma, mb, mc, md, x0, y0, n_burn, n_avg):
    """Two Lyapunov exponents of the base automorphism via per-step QR.

    Runs n_burn warm-up steps (frame alignment) followed by n_avg averaged
    steps; returns the two summed log diagonal growth rates over the window.
    """
    x = x0
    y = y0
    q11 = 1.0
    q21 = 0.0
    q12 = 0.0
    q22 = 1.0
    s1 = 0.0
    k1 = 0.0
    s2 = 0.0
    k2 = 0.0
    for i in range(n_burn + n_avg):
        b11 = ma * q11 + mb * q21
        b21 = mc * q11 + md * q21
        b12 = ma * q12 + mb * q22
        b22 = mc * q12 + md * q22
        r11 = math.sqrt(b11 * b11 + b21 * b21)
        q11 = b11 / r11
        q21 = b21 / r11
        r12 = q11 * b12 + q21 * b22
        v1 = b12 - r12 * q11
        v2 = b22 - r12 * q21
        r22 = math.sqrt(v1 * v1 + v2 * v2)
        q12 = v1 / r22
        q22 = v2 / r22
        if i >= n_burn:
            lv = math.log(r11)
            yv = lv - k1
            tv = s1 + yv
            k1 = (tv - s1) - yv
            s1 = tv
            lv = math.log(r22)
            yv = lv - k2
            tv = s2 + yv
            k2 = (tv - s2) - yv
            s2 = tv
        xn = (ma * x + mb * y) % 1.0
        yn = (mc * x + md * y) % 1.0
        x = xn
        y = yn
    return s1 + k1, s2 + k2


@njit(cache=True)
def spectrum_scan3(ma, mb, mc, md, phik, phikind, phic,
                   x0, y0, fiber_kind, lt0, mirror, twopic, mode,
                   n_burn, n_avg, amplitude):
    """Three Lyapunov exponents of a 3D skew system via per-step QR.

    The Jacobian at (x, t) is [[A, 0], [w^T, dd]]; for the compactified map
    w = -X(Phi_{phi(x)}(t)) grad phi(x) and dd = -Phi'_{phi(x)}(t), for the
    control system w = 0 and dd = r'(t).  Summed log growth rates over the
    averaged window are returned (descending order is the caller's job).
    """
    x = x0
    y = y0
    a = lt0
    sign = mirror
    q = np.eye(3)
    b = np.empty((3, 3))
    sums = np.zeros(3)
    comps = np.zeros(3)

    for i in range(n_burn + n_avg):
        if mode == MODE_COMPACTIFIED:
            phi_v = _phi_eval(x, y, phik, phikind, phic)
            gx, gy = _phi_grad(x, y, phik, phikind, phic)
            w_step = twopic * phi_v
        else:
            gx = 0.0
            gy = 0.0
            w_step = -twopic

        a_next = a + w_step
        if fiber_kind == FIBER_AT_ZERO:
            logd = w_step
            x_reached = 0.0
        elif fiber_kind == FIBER_AT_HALF:
            logd = -w_step
            x_reached = 0.0
        else:
            logd = w_step + _log1p_exp(2.0 * a) - _log1p_exp(2.0 * (a_next))
            x_reached = amplitude * math.sin(_TWO_PI * _fiber_rep(a_next))

        if mode == MODE_COMPACTIFIED:
            w1 = -sign * x_reached * gx
            w2 = -sign * x_reached * gy
            dd = -math.exp(logd)
        else:
            w1 = 0.0
            w2 = 0.0
            dd = math.exp(logd)

        # B = Df @ Q with Df = [[ma, mb, 0], [mc, md, 0], [w1, w2, dd]]
        for col in range(3):
            b[0, col] = ma * q[0, col] + mb * q[1, col]
            b[1, col] = mc * q[0, col] + md * q[1, col]
            b[2, col] = w1 * q[0, col] + w2 * q[1, col] + dd * q[2, col]

        # modified Gram-Schmidt
        for col in range(3):
            for prev in range(col):
                r = q[0, prev] * b[0, col] + q[1, prev] * b[1, col] + q[2, prev] * b[2, col]
                b[0, col] -= r * q[0, prev]
                b[1, col] -= r * q[1, prev]
                b[2, col] -= r * q[2, prev]
            rdiag = math.sqrt(b[0, col] ** 2 + b[1, col] ** 2 + b[2, col] ** 2)
            q[0, col] = b[0, col] / rdiag
            q[1, col] = b[1, col] / rdiag
            q[2, col] = b[2, col] / rdiag
            if i >= n_burn:
                lv = math.log(rdiag)
                yv = lv - comps[col]
                tv = sums[col] + yv
                comps[col] = (tv - sums[col]) - yv
                sums[col] = tv

        a = a_next
        if mode == MODE_COMPACTIFIED:
            sign = -sign
        xn = (ma * x + mb * y) % 1.0
        yn = (mc * x + md * y) % 1.0
        x = xn
        y = yn

    return sums + comps


@njit(cache=True)
def birkhoff_partial_sums(ma, mb, mc, md, phik, phikind, phic, x0, y0, n):
    """Partial sums S_0 = 0, ..., S_n of phi along the base orbit."""
    out = np.empty(n + 1)
    out[0] = 0.0
    x = x0
    y = y0
    acc = 0.0
    comp = 0.0
    for i in range(n):
        v = _phi_eval(x, y, phik, phikind, phic)
        yv = v - comp
        tv = acc + yv
        comp = (tv - acc) - yv
        acc = tv
        out[i + 1] = acc + comp
        xn = (ma * x + mb * y) % 1.0
        yn = (mc * x + md * y) % 1.0
        x = xn
        y = yn
    return out


@njit(cache=True)
def occupation_scan(ma, mb, mc, md, phik, phikind, phic, x0, y0, thresholds, chk):
    """Counts #{ j < n : S_j >= tau_m } for every checkpoint n and threshold tau_m.

    Maintains a histogram over threshold bins (one increment per step), so
    the cost per step is a binary search, independent of how many thresholds
    are tracked.  Returns an (n_chk, n_thresh) count matrix.
    """
    n_th = thresholds.shape[0]
    n_chk = chk.shape[0]
    hist = np.zeros(n_th + 1, dtype=np.int64)
    out = np.zeros((n_chk, n_th), dtype=np.int64)
    x = x0
    y = y0
    s = 0.0
    comp = 0.0
    ci = 0
    n_max = chk[n_chk - 1]
    for i in range(n_max):
        # bin index = number of thresholds <= S_i  (S_0 = 0 counts too)
        lo = 0
        hi = n_th
        while lo < hi:
            mid = (lo + hi) // 2
            if thresholds[mid] <= s:
                lo = mid + 1
            else:
                hi = mid
        hist[lo] += 1

        v = _phi_eval(x, y, phik, phikind, phic)
        yv = v - comp
        tv = s + yv
        comp = (tv - s) - yv
        s = tv
        xn = (ma * x + mb * y) % 1.0
        yn = (mc * x + md * y) % 1.0
        x = xn
        y = yn

        if i + 1 == chk[ci]:
            total = 0
            for m in range(n_th, 0, -1):
                total += hist[m]
                out[ci, m - 1] = total
            ci += 1
            if ci == n_chk:
                break
    return out


@njit(cache=True)
def _pair_separated(ma, mb, mc, md, ax, ay, bx, by, n_eff, rho):
    """True if some iterate k < n_eff puts the two points at distance > rho."""
    rho2 = rho * rho
    x1 = ax
    y1 = ay
    x2 = bx
    y2 = by
    for _ in range(n_eff):
        dx = abs(x1 - x2)
        if dx > 0.5:
            dx = 1.0 - dx
        dy = abs(y1 - y2)
        if dy > 0.5:
            dy = 1.0 - dy
        if dx * dx + dy * dy > rho2:
            return True
        x1n = (ma * x1 + mb * y1) % 1.0
        y1n = (mc * x1 + md * y1) % 1.0
        x1 = x1n
        y1 = y1n
        x2n = (ma * x2 + mb * y2) % 1.0
        y2n = (mc * x2 + md * y2) % 1.0
        x2 = x2n
        y2 = y2n
    return False


@njit(cache=True)
def separated_greedy(ma, mb, mc, md, bx, by, ex, ey, seg_len, delta, n_eff, rho, max_points):
    """Greedy maximal (n, rho)-separated set on an unstable segment.

    Scans the parameter grid theta = 0, delta, 2 delta, ... <= seg_len and
    admits a point whenever it is (n, rho)-separated from the set admitted so
    far.  Because the segment runs along the unstable eigendirection, the
    orbit distance between segment points is monotone in their parameter gap
    up to the first scale where it exceeds rho, so separation needs checking
    only against the most recent admitted point.

    Returns (params, count, min_gap); count = -1 signals overflow of the
    ``max_points`` budget.
    """
    n_grid = int(seg_len / delta) + 1
    out = np.empty(max_points)
    count = 0
    min_gap = 1e300
    last = 0.0
    for g in range(n_grid):
        theta = g * delta
        if count == 0:
            out[0] = theta
            count = 1
            last = theta
            continue
        ax = (bx + last * ex) % 1.0
        ay = (by + last * ey) % 1.0
        cx = (bx + theta * ex) % 1.0
        cy = (by + theta * ey) % 1.0
        if _pair_separated(ma, mb, mc, md, ax, ay, cx, cy, n_eff, rho):
            if count >= max_points:
                return out[:1], -1, 0.0
            out[count] = theta
            count += 1
            gap = theta - last
            if gap < min_gap:
                min_gap = gap
            last = theta
    return out[:count], count, min_gap


@njit(cache=True)
def verify_adjacent_separation(ma, mb, mc, md, bx, by, ex, ey, params, n_eff, rho):
    """Direct pairwise check of consecutive admitted points; True if all separated."""
    for i in range(params.shape[0] - 1):
        ax = (bx + params[i] * ex) % 1.0
        ay = (by + params[i] * ey) % 1.0
        cx = (bx + params[i + 1] * ex) % 1.0
        cy = (by + params[i + 1] * ey) % 1.0
        if not _pair_separated(ma, mb, mc, md, ax, ay, cx, cy, n_eff, rho):
            return False
    return True


@njit(cache=True)
def probe_maximality(ma, mb, mc, md, bx, by, ex, ey, params, probes, n_eff, rho):
    """True if every probe parameter is within rho (in d_n) of its nearest admitted point."""
    for i in range(probes.shape[0]):
        theta = probes[i]
        # nearest admitted parameter by binary search
        lo = 0
        hi = params.shape[0]
        while lo < hi:
            mid = (lo + hi) // 2
            if params[mid] <= theta:
                lo = mid + 1
            else:
                hi = mid
        best = 1e300
        nearest = 0.0
        if lo > 0 and abs(theta - params[lo - 1]) < best:
            best = abs(theta - params[lo - 1])
            nearest = params[lo - 1]
        if lo < params.shape[0] and abs(theta - params[lo]) < best:
            best = abs(theta - params[lo])
            nearest = params[lo]
        ax = (bx + nearest * ex) % 1.0
        ay = (by + nearest * ey) % 1.0
        cx = (bx + theta * ex) % 1.0
        cy = (by + theta * ey) % 1.0
        if _pair_separated(ma, mb, mc, md, ax, ay, cx, cy, n_eff, rho):
            return False
    return True


@njit(cache=True)
def bowen_ball_length(ma, mb, mc, md, bx, by, ex, ey, seg_len, center, n_eff, rho):
    """Length of the d_n-ball of radius rho around a segment point, inside the segment.

    On an unstable segment the ball is an interval; each side is located by
    bisection on the separation predicate (62 halvings reach fl.p. width).
    """
    cx = (bx + center * ex) % 1.0
    cy = (by + center * ey) % 1.0

    right = 0.0
    hi = seg_len - center
    if hi > 0.0:
        px = (bx + seg_len * ex) % 1.0
        py = (by + seg_len * ey) % 1.0
        if not _pair_separated(ma, mb, mc, md, cx, cy, px, py, n_eff, rho):
            right = hi
        else:
            lo = 0.0
            for _ in range(62):
                mid = 0.5 * (lo + hi)
                px = (bx + (center + mid) * ex) % 1.0
                py = (by + (center + mid) * ey) % 1.0
                if _pair_separated(ma, mb, mc, md, cx, cy, px, py, n_eff, rho):
                    hi = mid
                else:
                    lo = mid
            right = lo

    left = 0.0
    hi = center
    if hi > 0.0:
        px = (bx + 0.0 * ex) % 1.0
        py = (by + 0.0 * ey) % 1.0
        if not _pair_separated(ma, mb, mc, md, cx, cy, px, py, n_eff, rho):
            left = hi
        else:
            lo = 0.0
            for _ in range(62):
                mid = 0.5 * (lo + hi)
                px = (bx + (center - mid) * ex) % 1.0
                py = (by + (center - mid) * ey) % 1.0
                if _pair_separated(ma, mb, mc, md, cx, cy, px, py, n_eff, rho):
                    hi = mid
                else:
                    lo = mid
            left = lo

    return left + right


@njit(cache=True)
def _lorenz_rhs(x, y, z, sig, rho_p, beta):
    dx = sig * (y - x)
    dy = x * (rho_p - z) - y
    dz = x * y - beta * z
    return dx, dy, dz


@njit(cache=True)
def _lorenz_rk4_step(x, y, z, sig, rho_p, beta, h):
    k1x, k1y, k1z = _lorenz_rhs(x, y, z, sig, rho_p, beta)
    k2x, k2y, k2z = _lorenz_rhs(x + 0.5 * h * k1x, y + 0.5 * h * k1y, z + 0.5 * h * k1z,
                                sig, rho_p, beta)
    k3x, k3y, k3z = _lorenz_rhs(x + 0.5 * h * k2x, y + 0.5 * h * k2y, z + 0.5 * h * k2z,
                                sig, rho_p, beta)
    k4x, k4y, k4z = _lorenz_rhs(x + h * k3x, y + h * k3y, z + h * k3z, sig, rho_p, beta)
    s = h / 6.0
    return (x + s * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
            y + s * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
            z + s * (k1z + 2.0 * k2z + 2.0 * k3z + k4z))


@njit(cache=True)
def lorenz_trajectory(x0, y0, z0, sig, rho_p, beta, h, n_steps, stride, guard):
    """Fixed-step RK4 trajectory sampled every ``stride`` steps.

    Returns (samples, status): samples has the start plus every stride-th
    state; status 0 = fine, 1 = norm exceeded ``guard`` (divergence).
    """
    n_out = n_steps // stride + 1
    out = np.empty((n_out, 3))
    out[0, 0] = x0
    out[0, 1] = y0
    out[0, 2] = z0
    x = x0
    y = y0
    z = z0
    w = 1
    for i in range(n_steps):
        x, y, z = _lorenz_rk4_step(x, y, z, sig, rho_p, beta, h)
        if x * x + y * y + z * z > guard * guard:
            return out[:w], 1
        if (i + 1) % stride == 0:
            out[w, 0] = x
            out[w, 1] = y
            out[w, 2] = z
            w += 1
    return out[:w], 0


@njit(cache=True)
def _lorenz_observe(x, y, z, code, p1, p2):
    if code == 0:
        return x
    if code == 1:
        return y
    if code == 2:
        return z
    if code == 3:
        return x * x + y * y + z * z
    # smoothed indicator around a z-level
    u = (z - p1) / p2
    return math.exp(-u * u)


@njit(cache=True)
def lorenz_ensemble_averages(starts, sig, rho_p, beta, h, chk_steps, code, p1, p2, guard):
    """Running time-averages (trapezoid rule) of one observable for many starts.

    chk_steps are step counts at which (1/T) int_0^T psi is recorded.
    Returns (averages (m, n_chk), status (m,)).
    """
    m = starts.shape[0]
    n_chk = chk_steps.shape[0]
    out = np.empty((m, n_chk))
    status = np.zeros(m, dtype=np.int64)
    n_max = chk_steps[n_chk - 1]
    for j in range(m):
        x = starts[j, 0]
        y = starts[j, 1]
        z = starts[j, 2]
        acc = 0.0
        comp = 0.0
        prev = _lorenz_observe(x, y, z, code, p1, p2)
        ci = 0
        for i in range(n_max):
            x, y, z = _lorenz_rk4_step(x, y, z, sig, rho_p, beta, h)
            if x * x + y * y + z * z > guard * guard:
                status[j] = 1
                for r in range(ci, n_chk):
                    out[j, r] = np.nan
                break
            cur = _lorenz_observe(x, y, z, code, p1, p2)
            v = 0.5 * h * (prev + cur)
            yv = v - comp
            tv = acc + yv
            comp = (tv - acc) - yv
            acc = tv
            prev = cur
            if i + 1 == chk_steps[ci]:
                out[j, ci] = (acc + comp) / ((i + 1) * h)
                ci += 1
                if ci == n_chk:
                    break
    return out, status
