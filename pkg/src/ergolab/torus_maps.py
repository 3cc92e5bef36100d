"""Torus phase spaces, hyperbolic toral automorphisms, and circle-fiber skew products.

This module defines the building blocks used everywhere else:

* ``AnosovMatrix`` -- an integer 2x2 matrix with determinant +-1 and trace of
  modulus > 2, acting on T^2 = R^2/Z^2.
* ``Observable`` -- a zero-mean trigonometric polynomial on the torus.
* ``CircleField`` -- the vector field X(t) = c sin(2 pi t) on the circle,
  whose time-s flow and its spatial derivative have closed forms.
* ``SystemSpec`` -- one of four systems built from those pieces:

  - ``anosov2d``: the base automorphism alone;
  - ``skew_unbounded``: g(x, t) = (A x, t + phi(x)) with real fiber;
  - ``compactified3d``: f(x, t) = (A x, -Phi_{phi(x)}(t)) on T^3, the circle
    compactification of g (the minus sign folds the unbounded drift onto the
    circle and makes the two invariant tori {t=0}, {t=1/2} swap-free);
  - ``morse_smale_control``: (x, t) -> (A x, r(t)) with r the time-one map of
    -kappa sin(2 pi t), a control system whose fiber has an attractor at t=0.

All circle arithmetic reduces to [0, 1); values within 1e-15 of 1 reduce to 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "mod1",
    "torus_distance",
    "TorusPoint2",
    "TorusPoint3",
    "AnosovMatrix",
    "Observable",
    "CircleField",
    "SystemSpec",
    "apply_anosov",
    "inverse_anosov",
    "fixed_points",
    "eval_phi",
    "flow_circle",
    "fiber_derivative",
    "apply_system",
    "inverse_system",
    "apply_skew",
    "inverse_skew",
    "involution",
    "conjugacy_h",
    "conjugacy_h_inv",
    "tangent_matrix",
    "rationally_independent",
    "default_matrix",
    "default_observable",
    "default_system",
]

_ONE_SNAP = 1e-15

_TWO_PI = 2.0 * math.pi


def mod1(value: float) -> float:
    """Reduce a real number to [0, 1), snapping values within 1e-15 of 1 to 0."""
    r = value % 1.0
    if r >= 1.0 - _ONE_SNAP:
        return 0.0
    return r


def torus_distance(u, v) -> float:
    """Distance on T^d between coordinate arrays, minimum over deck translates."""
    d = np.abs(np.asarray(u, dtype=float) - np.asarray(v, dtype=float))
    d = np.minimum(d, 1.0 - d)
    return float(np.sqrt(np.sum(d * d)))


@dataclass(frozen=True)
class TorusPoint2:
    """A point on T^2 with both coordinates in [0, 1)."""

    x1: float
    x2: float

    def __post_init__(self):
        object.__setattr__(self, "x1", mod1(float(self.x1)))
        object.__setattr__(self, "x2", mod1(float(self.x2)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2])


@dataclass(frozen=True)
class TorusPoint3:
    """A point on T^3 = T^2 x (R/Z), written (base, t)."""

    base: TorusPoint2
    t: float

    def __post_init__(self):
        object.__setattr__(self, "t", mod1(float(self.t)))

    def as_array(self) -> np.ndarray:
        return np.array([self.base.x1, self.base.x2, self.t])


@dataclass(frozen=True)
class AnosovMatrix:
    """Integer matrix [[a, b], [c, d]] inducing a hyperbolic torus automorphism.

    Requires |det| = 1 (torus diffeomorphism) and |a + d| > 2 (hyperbolicity:
    real eigenvalues off the unit circle).  Eigendata are derived fields.
    """

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            v = getattr(self, name)
            if v != int(v):
                raise ValueError(f"matrix entry {name}={v} is not an integer")
            object.__setattr__(self, name, int(v))
        if abs(self.det) != 1:
            raise ValueError(f"determinant must be +-1, got {self.det}")
        if abs(self.a + self.d) <= 2:
            raise ValueError(f"|trace| must exceed 2 for hyperbolicity, got {self.a + self.d}")

    @property
    def det(self) -> int:
        return self.a * self.d - self.b * self.c

    @property
    def trace(self) -> int:
        return self.a + self.d

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=float)

    @cached_property
    def eigenvalues(self) -> tuple[float, float]:
        """(unstable, stable) eigenvalues, ordered by decreasing modulus."""
        t = float(self.trace)
        disc = math.sqrt(t * t - 4.0 * self.det)
        lam1 = (t + disc) / 2.0
        lam2 = (t - disc) / 2.0
        if abs(lam1) < abs(lam2):
            lam1, lam2 = lam2, lam1
        return lam1, lam2

    @cached_property
    def expansion(self) -> float:
        """Modulus of the unstable eigenvalue (spectral radius)."""
        return abs(self.eigenvalues[0])

    @cached_property
    def log_expansion(self) -> float:
        return math.log(self.expansion)

    def _eigenvector(self, lam: float) -> np.ndarray:
        # (A - lam I) v = 0; pick the better-conditioned row.
        if abs(self.b) >= abs(self.c):
            v = np.array([float(self.b), lam - self.a])
        else:
            v = np.array([lam - self.d, float(self.c)])
        n = float(np.hypot(v[0], v[1]))
        if n == 0.0:
            raise ValueError("degenerate eigenvector; matrix is not hyperbolic")
        v = v / n
        if v[0] < 0 or (v[0] == 0 and v[1] < 0):
            v = -v
        return v

    @cached_property
    def unstable_direction(self) -> np.ndarray:
        """Unit eigenvector of the unstable eigenvalue, first component >= 0."""
        return self._eigenvector(self.eigenvalues[0])

    @cached_property
    def stable_direction(self) -> np.ndarray:
        return self._eigenvector(self.eigenvalues[1])

    @cached_property
    def inverse(self) -> "AnosovMatrix":
        s = self.det  # +-1, so the inverse is again integral
        return AnosovMatrix(s * self.d, -s * self.b, -s * self.c, s * self.a)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d}

    @staticmethod
    def from_dict(d: dict) -> "AnosovMatrix":
        return AnosovMatrix(d["a"], d["b"], d["c"], d["d"])


@dataclass(frozen=True)
class Observable:
    """A real trigonometric polynomial sum_j coeff_j trig_j(2 pi k_j . x).

    Terms are (frequency vector, "cos"|"sin", coefficient).  The all-zero
    frequency is forbidden, which forces the mean against Lebesgue to be
    exactly zero.  Frequency vectors may have length 2 (base observables) or
    3 (observables on T^3 with a fiber component).
    """

    terms: tuple

    def __post_init__(self):
        cleaned = []
        dim = None
        for freq, kind, coeff in self.terms:
            freq = tuple(int(k) for k in freq)
            if dim is None:
                dim = len(freq)
            if len(freq) != dim:
                raise ValueError("all frequency vectors must have the same length")
            if dim not in (2, 3):
                raise ValueError("frequency vectors must have length 2 or 3")
            if all(k == 0 for k in freq):
                raise ValueError("the zero frequency is forbidden (mean must vanish)")
            if kind not in ("cos", "sin"):
                raise ValueError(f"kind must be 'cos' or 'sin', got {kind!r}")
            coeff = float(coeff)
            if not math.isfinite(coeff):
                raise ValueError("coefficients must be finite")
            cleaned.append((freq, kind, coeff))
        if not cleaned:
            raise ValueError("observable needs at least one term")
        object.__setattr__(self, "terms", tuple(cleaned))

    @property
    def dimension(self) -> int:
        return len(self.terms[0][0])

    def value(self, p) -> float:
        """Evaluate at a point (TorusPoint2/3 or coordinate sequence)."""
        x = _coords(p, self.dimension)
        total = 0.0
        for freq, kind, coeff in self.terms:
            arg = _TWO_PI * sum(k * xi for k, xi in zip(freq, x))
            total += coeff * (math.cos(arg) if kind == "cos" else math.sin(arg))
        return total

    def value_array(self, xs: np.ndarray) -> np.ndarray:
        """Vectorized evaluation on an (m, dimension) array."""
        xs = np.asarray(xs, dtype=float)
        total = np.zeros(xs.shape[0])
        for freq, kind, coeff in self.terms:
            arg = _TWO_PI * (xs @ np.asarray(freq, dtype=float))
            total += coeff * (np.cos(arg) if kind == "cos" else np.sin(arg))
        return total

    def gradient(self, p) -> np.ndarray:
        x = _coords(p, self.dimension)
        g = np.zeros(self.dimension)
        for freq, kind, coeff in self.terms:
            arg = _TWO_PI * sum(k * xi for k, xi in zip(freq, x))
            if kind == "cos":
                scale = -_TWO_PI * coeff * math.sin(arg)
            else:
                scale = _TWO_PI * coeff * math.cos(arg)
            g += scale * np.asarray(freq, dtype=float)
        return g

    def sup_bound(self) -> float:
        """Upper bound sum |coeff_j| on the sup norm."""
        return sum(abs(c) for _, _, c in self.terms)

    def term_arrays(self):
        """(frequencies int64 (m,d), kinds int64 (m,), coeffs float64 (m,)) for kernels."""
        freqs = np.array([f for f, _, _ in self.terms], dtype=np.int64)
        kinds = np.array([0 if k == "cos" else 1 for _, k, _ in self.terms], dtype=np.int64)
        coeffs = np.array([c for _, _, c in self.terms], dtype=np.float64)
        return freqs, kinds, coeffs

    def to_list(self) -> list:
        return [[list(f), k, c] for f, k, c in self.terms]

    @staticmethod
    def from_list(items) -> "Observable":
        return Observable(tuple((tuple(f), k, float(c)) for f, k, c in items))


def _coords(p, dim: int):
    if isinstance(p, TorusPoint2):
        x = (p.x1, p.x2)
    elif isinstance(p, TorusPoint3):
        x = (p.base.x1, p.base.x2, p.t)
    else:
        x = tuple(float(v) for v in p)
    if len(x) < dim:
        raise ValueError(f"point has dimension {len(x)}, observable needs {dim}")
    return x[:dim]


@dataclass(frozen=True)
class CircleField:
    """The circle vector field X(t) = c sin(2 pi t), c > 0.

    X vanishes exactly at t = 0 and t = 1/2, is positive on (0, 1/2), odd
    around 0, and 1-periodic.  Its flow is solvable: with u = tan(pi t), the
    equation du/ds = 2 pi c u gives tan(pi Phi_s(t)) = tan(pi t) e^{2 pi c s}.
    """

    amplitude: float

    def __post_init__(self):
        c = float(self.amplitude)
        if not (c > 0.0 and math.isfinite(c)):
            raise ValueError("field amplitude must be a positive finite real")
        object.__setattr__(self, "amplitude", c)

    def value(self, t: float) -> float:
        return self.amplitude * math.sin(_TWO_PI * t)


def _log1p_exp(w: float) -> float:
    """log(1 + e^w), stable for all w."""
    if w > 36.0:
        return w + math.exp(-w)
    if w < -36.0:
        return math.exp(w)
    return math.log1p(math.exp(w))


def _flow_log_arg(c: float, s: float, t: float) -> float:
    """log tan(pi Phi_s(t)) for t in (0, 1/2): the flow is linear in this chart."""
    return math.log(math.tan(math.pi * t)) + _TWO_PI * c * s


def _flow_half(c: float, s: float, t: float) -> float:
    """Phi_s(t) for t in (0, 1/2); the result stays in (0, 1/2).

    Evaluated through atan of an exponential that is kept <= 1 on both
    branches, so there is no overflow and precision is uniform in s.
    """
    la = _flow_log_arg(c, s, t)
    if la <= 0.0:
        return math.atan(math.exp(la)) / math.pi
    return 0.5 - math.atan(math.exp(-la)) / math.pi


def flow_circle(field: CircleField, s: float, t0: float) -> float:
    """Time-s flow of X(t) = c sin(2 pi t), from t0 in [0, 1).

    The fixed points 0 and 1/2 are invariant.  On (1/2, 1) the flow follows
    from the odd symmetry Phi_s(-t) = -Phi_s(t) together with 1-periodicity.
    """
    t0 = mod1(t0)
    if t0 == 0.0 or t0 == 0.5:
        return t0
    if t0 < 0.5:
        return _flow_half(field.amplitude, s, t0)
    return mod1(1.0 - _flow_half(field.amplitude, s, 1.0 - t0))


def fiber_derivative(field: CircleField, s: float, t0: float) -> float:
    """Spatial derivative of the time-s flow map, d Phi_s(t)/dt at t0.

    Equals X(Phi_s(t0))/X(t0) away from the fixed points and e^{+-2 pi c s}
    at t0 = 0, 1/2.  Always positive; |log| is bounded by 2 pi c |s|.
    """
    t0 = mod1(t0)
    a = _TWO_PI * field.amplitude * s
    if t0 == 0.0:
        return math.exp(a)
    if t0 == 0.5:
        return math.exp(-a)
    tt = t0 if t0 < 0.5 else 1.0 - t0  # the derivative is even around both fixed points
    la = math.log(math.tan(math.pi * tt))
    log_d = a + _log1p_exp(2.0 * la) - _log1p_exp(2.0 * (la + a))
    return math.exp(log_d)


_VARIANTS = ("anosov2d", "skew_unbounded", "compactified3d", "morse_smale_control")


@dataclass(frozen=True)
class SystemSpec:
    """Full parameterization of one of the four torus systems.

    Fields not used by a variant stay None.  ``compactified3d`` requires the
    circle field; ``morse_smale_control`` requires the control rate kappa of
    its fiber field -kappa sin(2 pi t).  For the skew variants the observable
    must take rationally independent values at two fixed points of the base
    (checked numerically over small integer combinations).
    """

    variant: str
    matrix: AnosovMatrix
    phi: Observable | None = None
    field: CircleField | None = None
    control_rate: float | None = None

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {_VARIANTS}")
        if self.variant in ("anosov2d", "skew_unbounded", "compactified3d"):
            if self.phi is None:
                raise ValueError(f"variant {self.variant} requires an observable phi")
            if self.phi.dimension != 2:
                raise ValueError("the driving observable phi must live on the base T^2")
        if self.variant == "compactified3d" and self.field is None:
            raise ValueError("compactified3d requires a circle field")
        if self.variant == "morse_smale_control":
            if self.control_rate is None or not (float(self.control_rate) > 0):
                raise ValueError("morse_smale_control requires control_rate > 0")
            object.__setattr__(self, "control_rate", float(self.control_rate))
        if self.variant in ("skew_unbounded", "compactified3d"):
            self._check_fixed_point_values()

    def _check_fixed_point_values(self):
        pts = fixed_points(self.matrix)
        if len(pts) < 2:
            raise ValueError(
                "skew variants need a base map with at least two fixed points; "
                f"this matrix has {len(pts)} (|det(A-I)| = {len(pts)})"
            )
        v1 = self.phi.value(pts[0])
        v2 = self.phi.value(pts[1])
        if not rationally_independent(v1, v2):
            raise ValueError(
                f"phi values at the first two fixed points ({v1:.6g}, {v2:.6g}) "
                "fail the rational-independence check"
            )

    @cached_property
    def control_field(self) -> CircleField | None:
        """Field kappa sin(2 pi t) whose time-(-1) map is the control fiber map."""
        if self.control_rate is None:
            return None
        return CircleField(self.control_rate)

    @cached_property
    def control_log_rate(self) -> float:
        """log r'(0) = -2 pi kappa for the control fiber map r."""
        if self.control_rate is None:
            raise ValueError("not a morse_smale_control spec")
        return -_TWO_PI * self.control_rate

    def to_dict(self) -> dict:
        d = {"variant": self.variant, "matrix": self.matrix.to_dict()}
        if self.phi is not None:
            d["phi"] = self.phi.to_list()
        if self.field is not None:
            d["field_amplitude"] = self.field.amplitude
        if self.control_rate is not None:
            d["control_rate"] = self.control_rate
        return d

    @staticmethod
    def from_dict(d: dict) -> "SystemSpec":
        return SystemSpec(
            variant=d["variant"],
            matrix=AnosovMatrix.from_dict(d["matrix"]),
            phi=Observable.from_list(d["phi"]) if "phi" in d else None,
            field=CircleField(d["field_amplitude"]) if "field_amplitude" in d else None,
            control_rate=d.get("control_rate"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "SystemSpec":
        return SystemSpec.from_dict(json.loads(text))


def rationally_independent(v1: float, v2: float, max_coeff: int = 12, tol: float = 1e-9) -> bool:
    """Numerically reject rational dependence a v1 + b v2 = 0 over small integers.

    True rational independence is uncheckable in floating point; this screens
    all integer pairs (a, b) with 0 < max(|a|, |b|) <= max_coeff.
    """
    for a in range(-max_coeff, max_coeff + 1):
        for b in range(-max_coeff, max_coeff + 1):
            if a == 0 and b == 0:
                continue
            if abs(a * v1 + b * v2) <= tol:
                return False
    return True


def apply_anosov(m: AnosovMatrix, p: TorusPoint2) -> TorusPoint2:
    """One step of the base automorphism, x -> A x mod 1."""
    return TorusPoint2(m.a * p.x1 + m.b * p.x2, m.c * p.x1 + m.d * p.x2)


def inverse_anosov(m: AnosovMatrix, p: TorusPoint2) -> TorusPoint2:
    return apply_anosov(m.inverse, p)


def fixed_points(m: AnosovMatrix) -> list[TorusPoint2]:
    """All fixed points of the automorphism: solutions of (A - I) x in Z^2.

    They form a subgroup of order |det(A - I)| inside the rational points
    with that denominator, found here by exact integer enumeration.
    """
    b11, b12 = m.a - 1, m.b
    b21, b22 = m.c, m.d - 1
    n = abs(b11 * b22 - b12 * b21)
    if n == 0:
        raise ValueError("A - I is singular; the fixed-point set is not finite")
    out = []
    for i in range(n):
        for j in range(n):
            # x = (i/n, j/n); (A - I) x integral iff both forms vanish mod n
            if (b11 * i + b12 * j) % n == 0 and (b21 * i + b22 * j) % n == 0:
                out.append(TorusPoint2(i / n, j / n))
    out.sort(key=lambda p: (p.x1, p.x2))
    return out


def eval_phi(phi: Observable, p) -> float:
    """Evaluate the observable at a point."""
    return phi.value(p)


def apply_system(spec: SystemSpec, p: TorusPoint3) -> TorusPoint3:
    """One step of the 3D system (compactified3d or morse_smale_control)."""
    base = apply_anosov(spec.matrix, p.base)
    if spec.variant == "compactified3d":
        s = spec.phi.value(p.base)
        t_next = mod1(-flow_circle(spec.field, s, p.t))
    elif spec.variant == "morse_smale_control":
        t_next = flow_circle(spec.control_field, -1.0, p.t)
    else:
        raise ValueError(f"apply_system needs a 3D variant, got {spec.variant}")
    return TorusPoint3(base, t_next)


def inverse_system(spec: SystemSpec, p: TorusPoint3) -> TorusPoint3:
    """Inverse of ``apply_system``."""
    base = inverse_anosov(spec.matrix, p.base)
    if spec.variant == "compactified3d":
        s = spec.phi.value(base)
        t_prev = flow_circle(spec.field, -s, mod1(-p.t))
    elif spec.variant == "morse_smale_control":
        t_prev = flow_circle(spec.control_field, 1.0, p.t)
    else:
        raise ValueError(f"inverse_system needs a 3D variant, got {spec.variant}")
    return TorusPoint3(base, t_prev)


def apply_skew(spec: SystemSpec, p: TorusPoint2, t: float) -> tuple[TorusPoint2, float]:
    """One step of the unbounded skew translation g(x, t) = (A x, t + phi(x))."""
    if spec.variant != "skew_unbounded":
        raise ValueError(f"apply_skew needs variant skew_unbounded, got {spec.variant}")
    return apply_anosov(spec.matrix, p), t + spec.phi.value(p)


def inverse_skew(spec: SystemSpec, p: TorusPoint2, t: float) -> tuple[TorusPoint2, float]:
    if spec.variant != "skew_unbounded":
        raise ValueError(f"inverse_skew needs variant skew_unbounded, got {spec.variant}")
    base = inverse_anosov(spec.matrix, p)
    return base, t - spec.phi.value(base)


def involution(p: TorusPoint3) -> TorusPoint3:
    """The fiber flip iota(x, t) = (x, -t), which commutes with compactified3d."""
    return TorusPoint3(p.base, mod1(-p.t))


def conjugacy_h(field: CircleField, x: TorusPoint2, s: float) -> TorusPoint3:
    """h(x, s) = (x, Phi_s(1/4)): maps T^2 x R onto T^2 x (0, 1/2).

    h conjugates the squared skew translation g^2 to the squared compactified
    map f^2 on the invariant open band 0 < t < 1/2.
    """
    return TorusPoint3(x, flow_circle(field, s, 0.25))


def conjugacy_h_inv(field: CircleField, p: TorusPoint3) -> tuple[TorusPoint2, float]:
    """Inverse of ``conjugacy_h``; requires t strictly inside (0, 1/2)."""
    if not (0.0 < p.t < 0.5):
        raise ValueError(f"conjugacy chart needs t in (0, 1/2), got {p.t}")
    # tan(pi Phi_s(1/4)) = e^{2 pi c s}
    s = math.log(math.tan(math.pi * p.t)) / (_TWO_PI * field.amplitude)
    return p.base, s


def tangent_matrix(spec: SystemSpec, p) -> np.ndarray:
    """Jacobian of the system at a point (2x2 for anosov2d, else 3x3).

    For the skew variants the fiber direction (0, 0, 1) is exactly invariant,
    which is what makes the center exponent computable as a scalar product.
    """
    a = spec.matrix.as_array()
    if spec.variant == "anosov2d":
        return a
    out = np.zeros((3, 3))
    out[:2, :2] = a
    if spec.variant == "skew_unbounded":
        out[2, :2] = spec.phi.gradient(p if isinstance(p, TorusPoint2) else p.base)
        out[2, 2] = 1.0
        return out
    if not isinstance(p, TorusPoint3):
        p = TorusPoint3(TorusPoint2(p[0], p[1]), p[2])
    if spec.variant == "compactified3d":
        s = spec.phi.value(p.base)
        reached = flow_circle(spec.field, s, p.t)
        out[2, :2] = -spec.field.value(reached) * spec.phi.gradient(p.base)
        out[2, 2] = -fiber_derivative(spec.field, s, p.t)
    else:  # morse_smale_control: fiber independent of base
        out[2, 2] = fiber_derivative(spec.control_field, -1.0, p.t)
    return out


def default_matrix() -> AnosovMatrix:
    """[[3, 1], [2, 1]]: hyperbolic, det 1, and |det(A - I)| = 2 fixed points."""
    return AnosovMatrix(3, 1, 2, 1)


def default_observable() -> Observable:
    """phi = cos(2 pi x1) + sqrt(2) cos(4 pi x1).

    Zero mean by construction; at the two fixed points (0,0) and (1/2,0) it
    takes the values 1 + sqrt(2) and -1 + sqrt(2), which no nontrivial small
    integer combination annihilates.
    """
    return Observable((((1, 0), "cos", 1.0), ((2, 0), "cos", math.sqrt(2.0))))


def default_system(variant: str = "compactified3d", *, amplitude: float = 0.05,
                   control_rate: float = 0.1) -> SystemSpec:
    """The default laboratory systems used throughout the test-suite."""
    m = default_matrix()
    phi = default_observable()
    if variant == "anosov2d":
        return SystemSpec("anosov2d", m, phi=phi)
    if variant == "skew_unbounded":
        return SystemSpec("skew_unbounded", m, phi=phi)
    if variant == "compactified3d":
        return SystemSpec("compactified3d", m, phi=phi, field=CircleField(amplitude))
    if variant == "morse_smale_control":
        return SystemSpec("morse_smale_control", m, control_rate=control_rate)
    raise ValueError(f"unknown variant {variant!r}")
