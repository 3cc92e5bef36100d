"""Birkhoff sums, the summed-autocorrelation variance sigma, and CLT paths.

For a zero-mean trigonometric observable over an integer hyperbolic matrix,
the autocorrelations int phi . phi o A^k dm are computable exactly: a
correlation survives only when (A^T)^k maps a frequency of phi onto another
one (Fourier pairing), and hyperbolicity pushes every frequency to infinity,
so only finitely many lags contribute.  ``sigma_exact`` performs that pairing
in exact integer arithmetic; the two Monte-Carlo estimators cross-validate it
at runtime.

The rescaled path X_n(t) = (1/sqrt(sigma n)) int_0^{nt} phi(A^[s] x) ds is
evaluated exactly from partial sums (the integrand is piecewise constant);
``wiener_tests`` compares a path ensemble against Brownian behavior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _scipy_stats

from . import kernels
from .rng import stream
from .torus_maps import Observable, SystemSpec, TorusPoint2, apply_anosov

__all__ = [
    "BirkhoffTrace",
    "SigmaEstimate",
    "CltPath",
    "WienerReport",
    "OccupationReport",
    "birkhoff_trace",
    "sigma_exact",
    "estimate_sigma_green_kubo",
    "estimate_sigma_variance",
    "sample_clt_path",
    "clt_ensemble",
    "wiener_tests",
    "occupation_report",
    "brownian_occupation_probability",
]

_GK_CHUNK = 1 << 16
_ENSEMBLE_CHUNK = 1 << 14


@dataclass(frozen=True)
class BirkhoffTrace:
    """Partial sums S_0 = 0, ..., S_n of an observable along a base orbit."""

    values: np.ndarray
    start: TorusPoint2

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0] - 1

    def occupation_count(self, n: int, threshold: float) -> int:
        """#{ 0 <= j < n : S_j >= threshold }."""
        if not (0 < n <= self.n + 1):
            raise ValueError("n out of range")
        return int(np.count_nonzero(self.values[:n] >= threshold))


def _matrix_scalars(spec: SystemSpec):
    m = spec.matrix
    return float(m.a), float(m.b), float(m.c), float(m.d)


def birkhoff_trace(spec: SystemSpec, x: TorusPoint2, n: int) -> BirkhoffTrace:
    """Exact partial sums of spec.phi along the base orbit of x."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    phik, phikind, phic = spec.phi.term_arrays()
    ma, mb, mc, md = _matrix_scalars(spec)
    values = kernels.birkhoff_partial_sums(ma, mb, mc, md, phik, phikind, phic,
                                           x.x1, x.x2, n)
    return BirkhoffTrace(values=values, start=x)


def _complex_coefficients(phi: Observable) -> dict:
    """Frequency -> complex Fourier coefficient, including negative twins."""
    coeff: dict[tuple, complex] = {}
    for freq, kind, c in phi.terms:
        if len(freq) != 2:
            raise ValueError("sigma applies to base observables on T^2")
        if kind == "cos":
            half = complex(c / 2.0, 0.0)
        else:
            half = complex(0.0, -c / 2.0)
        coeff[freq] = coeff.get(freq, 0j) + half
        neg = tuple(-k for k in freq)
        coeff[neg] = coeff.get(neg, 0j) + half.conjugate()
    return {k: v for k, v in coeff.items() if v != 0}


def sigma_exact(spec: SystemSpec, max_lag: int = 128) -> tuple[float, dict]:
    """sigma = sum over all lags of int phi . phi o A^k dm, by Fourier pairing.

    The lag-k correlation is sum over frequencies v of
    conj(c_{(A^T)^k v}) c_v, which vanishes once (A^T)^k has pushed every
    frequency of phi outside its own spectrum; hyperbolicity makes that
    permanent, so scanning lags up to max_lag in exact (arbitrary-precision)
    integer arithmetic captures the full sum for any observable whose
    frequencies collide within that horizon.

    Returns (sigma, {lag: correlation}) with only nonzero lags listed.
    """
    coeff = _complex_coefficients(spec.phi)
    at = ((spec.matrix.a, spec.matrix.c), (spec.matrix.b, spec.matrix.d))  # A^T rows

    def apply_t(v):
        return (at[0][0] * v[0] + at[0][1] * v[1], at[1][0] * v[0] + at[1][1] * v[1])

    at_inv = ((spec.matrix.inverse.a, spec.matrix.inverse.c),
              (spec.matrix.inverse.b, spec.matrix.inverse.d))

    def apply_t_inv(v):
        return (at_inv[0][0] * v[0] + at_inv[0][1] * v[1],
                at_inv[1][0] * v[0] + at_inv[1][1] * v[1])

    found: dict[int, float] = {}
    for direction, step_fn in ((1, apply_t), (-1, apply_t_inv)):
        images = {v: v for v in coeff}
        for lag in range(max_lag + 1):
            if direction == 1 or lag > 0:  # lag 0 belongs to the forward sweep
                total = 0j
                for v, img in images.items():
                    if img in coeff:
                        total += coeff[img].conjugate() * coeff[v]
                if total != 0:
                    found[direction * lag] = total.real
            images = {v: step_fn(img) for v, img in images.items()}
    sigma = math.fsum(found.values())
    return sigma, dict(sorted(found.items()))


@dataclass(frozen=True)
class SigmaEstimate:
    """Monte-Carlo summed-autocorrelation estimate with per-lag partial sums."""

    partial_sums: np.ndarray  # partial_sums[K] = c_0 + 2 sum_{1<=k<=K} c_k
    correlations: np.ndarray  # c_k for k = 0..lag_max
    variance_estimate: float
    stderr: float
    lag_max: int
    sample_size: int

    def __post_init__(self):
        for name in ("partial_sums", "correlations"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def to_dict(self) -> dict:
        return {
            "partial_sums": self.partial_sums.tolist(),
            "correlations": self.correlations.tolist(),
            "variance_estimate": self.variance_estimate,
            "stderr": self.stderr,
            "lag_max": self.lag_max,
            "sample_size": self.sample_size,
        }


def _step_points(xs: np.ndarray, spec: SystemSpec) -> np.ndarray:
    a = spec.matrix
    x1 = (a.a * xs[:, 0] + a.b * xs[:, 1]) % 1.0
    x2 = (a.c * xs[:, 0] + a.d * xs[:, 1]) % 1.0
    return np.column_stack((x1, x2))


def _chunk_plan(total_size: int, chunk: int):
    """Fixed partition of a sample budget into (chunk_index, size) pieces.

    The partition depends only on the budget, never on scheduling, so chunk
    RNG streams and ordered merges make results worker-count independent.
    """
    plan = []
    done = 0
    index = 0
    while done < total_size:
        m = min(chunk, total_size - done)
        plan.append((index, m))
        done += m
        index += 1
    return plan


def _gk_chunk(args):
    """Per-chunk lag sums for the Green-Kubo estimator (module-level: picklable)."""
    spec, lag_max, seed, chunk_index, m = args
    rng = stream(seed, "sigma-gk", chunk_index)
    xs = rng.random((m, 2))
    vals = np.empty((lag_max + 1, m))
    cur = xs
    for k in range(lag_max + 1):
        vals[k] = spec.phi.value_array(cur)
        if k < lag_max:
            cur = _step_points(cur, spec)
    lag_sums = np.array([float(np.sum(vals[0] * vals[k])) for k in range(lag_max + 1)])
    u = vals[0] * (2.0 * np.sum(vals, axis=0) - vals[0])
    return lag_sums, float(np.sum(u)), float(np.sum(u * u))


def estimate_sigma_green_kubo(spec: SystemSpec, lag_max: int, sample_size: int,
                              seed: int = 0, mapper=None) -> SigmaEstimate:
    """Monte-Carlo correlations c_k = int phi . phi o A^k dm, summed over lags.

    Samples are drawn in fixed-size chunks with per-chunk generators and the
    chunk results merged in chunk order, so the estimate is bit-identical
    however the chunks are scheduled; ``mapper`` may be any order-preserving
    map (e.g. a process pool's).  The standard error reported is that of the
    per-sample statistic phi(x)(2 sum_k phi(A^k x) - phi(x)), whose mean is
    the two-sided truncated sum.
    """
    if lag_max < 1:
        raise ValueError("lag_max must be at least 1")
    if sample_size < 2:
        raise ValueError("sample_size must be at least 2")
    tasks = [(spec, lag_max, seed, ci, m) for ci, m in _chunk_plan(sample_size, _GK_CHUNK)]
    results = list((mapper or map)(_gk_chunk, tasks))
    total = sample_size
    u_sums = [r[1] for r in results]
    u_sq_sums = [r[2] for r in results]
    corr = np.array([math.fsum(r[0][k] for r in results) / total
                     for k in range(lag_max + 1)])
    partial = np.empty(lag_max + 1)
    partial[0] = corr[0]
    for k in range(1, lag_max + 1):
        partial[k] = partial[k - 1] + 2.0 * corr[k]
    u_mean = math.fsum(u_sums) / total
    u_var = max(0.0, math.fsum(u_sq_sums) / total - u_mean * u_mean)
    stderr = math.sqrt(u_var / total)
    return SigmaEstimate(partial_sums=partial, correlations=corr,
                         variance_estimate=float(partial[-1]), stderr=stderr,
                         lag_max=lag_max, sample_size=total)


def _var_chunk(args):
    """Per-chunk Birkhoff sums S_n over random starts (module-level: picklable)."""
    spec, n, seed, chunk_index, m = args
    rng = stream(seed, "sigma-var", chunk_index)
    xs = rng.random((m, 2))
    s = np.zeros(m)
    for _ in range(n):
        s += spec.phi.value_array(xs)
        xs = _step_points(xs, spec)
    return s


def estimate_sigma_variance(spec: SystemSpec, n: int, ensemble: int, seed: int = 0,
                            with_stderr: bool = False, mapper=None):
    """Ensemble variance of S_n/sqrt(n) over uniform random starts.

    Converges to sigma as n grows; at finite n it carries an O(1/n) bias on
    top of the Monte-Carlo error, which is why the acceptance band is a loose
    +-0.1 around the exact value.
    """
    if n < 1000:
        raise ValueError("n must be at least 1e3 for the variance route")
    if ensemble < 8:
        raise ValueError("ensemble too small")
    tasks = [(spec, n, seed, ci, m) for ci, m in _chunk_plan(ensemble, _ENSEMBLE_CHUNK)]
    chunks = list((mapper or map)(_var_chunk, tasks))
    scaled = np.concatenate(chunks) / math.sqrt(n)
    value = float(np.var(scaled, ddof=1))
    if not with_stderr:
        return value
    stderr = value * math.sqrt(2.0 / (ensemble - 1))
    return value, stderr


@dataclass(frozen=True)
class CltPath:
    """One rescaled Birkhoff path X_n(t) sampled on a t-grid in [0, 1]."""

    t: np.ndarray
    values: np.ndarray
    n: int
    sigma: float

    def __post_init__(self):
        for name in ("t", "values"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def _resolve_sigma(spec: SystemSpec, sigma) -> float:
    if sigma is None:
        sigma = sigma_exact(spec)[0]
    sigma = float(sigma)
    if not (sigma > 0.0):
        raise ValueError(f"sigma must be positive, got {sigma}")
    return sigma


def sample_clt_path(spec: SystemSpec, x: TorusPoint2, n: int, grid: int = 101,
                    sigma=None) -> CltPath:
    """X_n on a uniform grid, exact from partial sums plus a fractional term."""
    sigma = _resolve_sigma(spec, sigma)
    if grid < 2:
        raise ValueError("grid needs at least two points")
    trace = birkhoff_trace(spec, x, n)
    scale = 1.0 / math.sqrt(sigma * n)
    t_grid = np.linspace(0.0, 1.0, grid)
    vals = np.empty(grid)
    pts = [x]  # orbit points, grown lazily for the fractional terms
    for j, t in enumerate(t_grid):
        tau = t * n
        idx = min(int(math.floor(tau)), n)
        frac = tau - idx
        v = trace.values[idx]
        if frac > 0.0:
            while len(pts) <= idx:
                pts.append(apply_anosov(spec.matrix, pts[-1]))
            v += frac * spec.phi.value(pts[idx])
        vals[j] = scale * v
    return CltPath(t=t_grid, values=vals, n=n, sigma=sigma)


def _clt_chunk(args):
    """Per-chunk CLT path block (module-level: picklable)."""
    spec, n, grid, sigma, seed, chunk_index, m = args
    t_grid = np.linspace(0.0, 1.0, grid)
    taus = t_grid * n
    idxs = np.minimum(np.floor(taus).astype(np.int64), n)
    fracs = taus - idxs
    scale = 1.0 / math.sqrt(sigma * n)
    rng = stream(seed, "clt", chunk_index)
    xs = rng.random((m, 2))
    s = np.zeros(m)
    out = np.zeros((m, grid))
    events = {}
    for j, (idx, frac) in enumerate(zip(idxs.tolist(), fracs.tolist())):
        events.setdefault(idx, []).append((j, frac))
    for i in range(n + 1):
        if i in events:
            phi_here = None
            for j, frac in events[i]:
                v = s.copy()
                if frac > 0.0:
                    if phi_here is None:
                        phi_here = spec.phi.value_array(xs)
                    v = v + frac * phi_here
                out[:, j] = scale * v
        if i < n:
            s += spec.phi.value_array(xs)
            xs = _step_points(xs, spec)
    return out


def clt_ensemble(spec: SystemSpec, n: int, count: int, grid: int = 101,
                 seed: int = 0, sigma=None, mapper=None):
    """(t_grid, paths) for ``count`` independent uniform starts.

    paths has shape (count, grid); the fractional interpolation term is
    included, so the rows equal ``sample_clt_path`` values exactly.  Chunked
    per-member seeding keeps the ensemble worker-count independent.
    """
    sigma = _resolve_sigma(spec, sigma)
    if grid < 2:
        raise ValueError("grid needs at least two points")
    tasks = [(spec, n, grid, sigma, seed, ci, m)
             for ci, m in _chunk_plan(count, _ENSEMBLE_CHUNK)]
    blocks = list((mapper or map)(_clt_chunk, tasks))
    return np.linspace(0.0, 1.0, grid), np.vstack(blocks)


@dataclass(frozen=True)
class WienerReport:
    """Summary statistics comparing a path ensemble with Brownian motion."""

    n_paths: int
    ks_statistic: float
    ks_pvalue: float
    variance_slope: float
    increment_correlation: float
    increment_corr_matrix: np.ndarray
    quarter_times: np.ndarray

    def __post_init__(self):
        for name in ("increment_corr_matrix", "quarter_times"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def to_dict(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "ks_statistic": self.ks_statistic,
            "ks_pvalue": self.ks_pvalue,
            "variance_slope": self.variance_slope,
            "increment_correlation": self.increment_correlation,
            "increment_corr_matrix": self.increment_corr_matrix.tolist(),
            "quarter_times": self.quarter_times.tolist(),
        }


def wiener_tests(paths, t_grid=None) -> WienerReport:
    """Kolmogorov-Smirnov, variance linearity, and increment independence.

    Args:
        paths: list of CltPath over one grid, or an (m, grid) array.
        t_grid: required when paths is a bare array.
    """
    if isinstance(paths, np.ndarray):
        mat = paths
        if t_grid is None:
            raise ValueError("t_grid is required with an array of paths")
        t = np.asarray(t_grid, dtype=float)
    else:
        if len(paths) == 0:
            raise ValueError("no paths supplied")
        t = paths[0].t
        for p in paths:
            if p.t.shape != t.shape or not np.array_equal(p.t, t):
                raise ValueError("paths sampled on different grids")
        mat = np.vstack([p.values for p in paths])
    m = mat.shape[0]
    if m < 500:
        raise ValueError(f"wiener_tests needs at least 500 paths, got {m}")

    ks_stat, ks_p = _scipy_stats.kstest(mat[:, -1], "norm")

    variances = np.var(mat, axis=0, ddof=1)
    mask = t > 0
    slope = float(np.sum(variances[mask] * t[mask]) / np.sum(t[mask] ** 2))

    mid = int(round((len(t) - 1) / 2))
    first_half = mat[:, mid]
    second_half = mat[:, -1] - mat[:, mid]
    rho = float(np.corrcoef(first_half, second_half)[0, 1])

    quarter_idx = [int(round(q * (len(t) - 1) / 4)) for q in range(5)]
    increments = np.diff(mat[:, quarter_idx], axis=1)
    corr = np.corrcoef(increments.T)

    return WienerReport(
        n_paths=m,
        ks_statistic=float(ks_stat),
        ks_pvalue=float(ks_p),
        variance_slope=slope,
        increment_correlation=rho,
        increment_corr_matrix=corr,
        quarter_times=t[quarter_idx],
    )


@dataclass(frozen=True)
class OccupationReport:
    """High-occupation scan: per scale n = 2^k, the time spent above sqrt(sigma n).

    ``hits[k]`` records whether #{j < n : S_j >= sqrt(sigma n)} >= (1-rho) n at
    that scale.  The Brownian reference probability for the same event is
    attached for context; the theory guarantees such scales recur but gives no
    rate, so this is a diagnostic, not an assertion.
    """

    scales: np.ndarray
    counts: np.ndarray
    fractions: np.ndarray
    hits: np.ndarray
    any_hit: bool
    rho: float
    sigma: float
    reference_probability: float

    def __post_init__(self):
        for name in ("scales", "counts", "fractions", "hits"):
            arr = np.asarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def to_dict(self) -> dict:
        return {
            "scales": self.scales.tolist(),
            "counts": self.counts.tolist(),
            "fractions": self.fractions.tolist(),
            "hits": self.hits.tolist(),
            "any_hit": self.any_hit,
            "rho": self.rho,
            "sigma": self.sigma,
            "reference_probability": self.reference_probability,
        }


def occupation_report(spec: SystemSpec, start: TorusPoint2, k_max: int = 20,
                      sigma=None, rho: float = 0.1,
                      reference_samples: int = 2000, seed: int = 0) -> OccupationReport:
    """Scan one orbit for scales n = 2^k where S_j stays above sqrt(sigma n)."""
    sigma = _resolve_sigma(spec, sigma)
    if not (0.0 < rho < 1.0):
        raise ValueError("rho must be in (0, 1)")
    ks = np.arange(k_max + 1)
    ns = (2 ** ks).astype(np.int64)
    thresholds = np.sqrt(sigma * ns.astype(float))
    phik, phikind, phic = spec.phi.term_arrays()
    ma, mb, mc, md = _matrix_scalars(spec)
    occ = kernels.occupation_scan(ma, mb, mc, md, phik, phikind, phic,
                                  start.x1, start.x2, thresholds, ns)
    counts = np.array([occ[k, k] for k in range(k_max + 1)], dtype=np.int64)
    fractions = counts / ns
    hits = fractions >= (1.0 - rho)
    ref = brownian_occupation_probability(rho, samples=reference_samples, seed=seed)
    return OccupationReport(scales=ns, counts=counts, fractions=fractions, hits=hits,
                            any_hit=bool(np.any(hits)), rho=rho, sigma=sigma,
                            reference_probability=ref)


def brownian_occupation_probability(rho: float, steps: int = 4096,
                                    samples: int = 2000, seed: int = 0) -> float:
    """Monte-Carlo P(#{j < n : W_j >= sqrt(n)} >= (1-rho) n) for a Gaussian walk.

    Scale-invariant in the Donsker limit, so a fixed resolution suffices as a
    reference rate for the orbit scan.
    """
    rng = stream(seed, "brownian-occupation")
    hits = 0
    chunk = max(1, (1 << 22) // steps)
    done = 0
    threshold = math.sqrt(steps)
    while done < samples:
        m = min(chunk, samples - done)
        w = np.cumsum(rng.standard_normal((m, steps)), axis=1)
        frac = np.count_nonzero(w >= threshold, axis=1) / steps
        hits += int(np.count_nonzero(frac >= 1.0 - rho))
        done += m
    return hits / samples
