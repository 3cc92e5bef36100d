"""Numerical laboratory for empirical measures of torus skew products.

Four model systems (a linear Anosov base, its unbounded and compactified
skew extensions, and a contracting control variant) plus a Lorenz-type flow,
with estimators for Lyapunov exponents, diffusion variances, functional CLT
checks, large-deviation rates, unstable entropy, and long-orbit oscillation
of empirical measures.
"""

from .torus_maps import (AnosovMatrix, CircleField, Observable, SystemSpec,
                         TorusPoint2, TorusPoint3, apply_system,
                         default_matrix, default_observable, default_system,
                         inverse_system)
from .measures import (EmpiricalAccumulator, MeasureVector, TestFamily,
                       distance_to_segment, reference_measure,
                       weak_star_distance)
from .lyapunov import ExponentTrace, center_exponent_trace, spectrum_trace
from .stochastics import (BirkhoffTrace, CltPath, SigmaEstimate, WienerReport,
                          birkhoff_trace, clt_ensemble,
                          estimate_sigma_green_kubo, estimate_sigma_variance,
                          sample_clt_path, sigma_exact, wiener_tests)
from .deviations import (ConvergenceCurve, DeviationCurve, EnsembleSpec,
                         RateFit, convergent_fraction, deviant_fraction,
                         fit_rate, sample_points, target_interval)
from .entropy import (GibbsResidual, GridResolutionError, PesinReport,
                      SeparatedSetResult, bowen_ball_volume, gibbs_residual,
                      max_separated_set, pesin_check, u_entropy_estimate)
from .historical import OscillationLog, nonconvergence_score, scan_orbit
from .lorenz import (DivergenceError, FlowSpec, flow_average, flow_deviation,
                     integrate, rk4_order_check, sample_flow_starts)
from .schedule import geometric_checkpoints
from .calibration import load_calibration, threshold
from .experiments import (ExperimentManifest, ResultBundle, rerun, run,
                          worker_count)

__all__ = [name for name in dir() if not name.startswith("_")]
