"""Frozen numeric thresholds, plus the campaign that re-derives them.

The acceptance tests read every tolerance, sample count, and pass band from
``data/calibration.json`` instead of inlining numbers, so a tolerance change
is a data change with a diff, not a code edit scattered over the test-suite.

``run_calibration_campaign`` regenerates the evidence behind the calibrated
bands (historical oscillation statistics, Wiener-report distributions under
repeated runs, RK4 error ratios at several anchors) and writes a candidate
file next to its campaign CSVs.  Freezing a new calibration is a deliberate
manual step: copy the candidate over ``data/calibration.json``.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = ["load_calibration", "threshold", "run_calibration_campaign"]

_cache = None


def load_calibration() -> dict:
    global _cache
    if _cache is None:
        text = resources.files("ergolab.data").joinpath("calibration.json").read_text()
        _cache = json.loads(text)
    return _cache


def threshold(*path):
    """Look up one value by key path, e.g. threshold("sigma", "target")."""
    node = load_calibration()
    for key in path:
        node = node[key]
    return node


def _quantiles(values) -> dict:
    a = np.asarray(values, dtype=float)
    return {
        "min": float(a.min()), "max": float(a.max()),
        "median": float(np.median(a)), "mean": float(a.mean()),
    }


def run_calibration_campaign(cfg: dict, run_dir: Path, mapper) -> None:
    from . import experiments, historical, lorenz, stochastics
    from .measures import TestFamily, reference_measure, weak_star_distance
    from .torus_maps import default_system

    frozen = load_calibration()
    seed = int(cfg.get("seed", 0))
    observed = {}

    hist_cfg = {"seeds": 8, "n_max": 1_000_000, "ratio": 1.3, "max_norm": 2}
    hist_cfg.update(cfg.get("historical") or {})
    spec3 = default_system("compactified3d")
    tasks = [(spec3, seed, i, int(hist_cfg["n_max"]), float(hist_cfg["ratio"]),
              int(hist_cfg["max_norm"]))
             for i in range(int(hist_cfg["seeds"]))]
    family = TestFamily(3, int(hist_cfg["max_norm"]))
    d12 = weak_star_distance(reference_measure(family, "nu1"),
                             reference_measure(family, "nu2"))
    hrows = []
    for index, start, log in mapper(experiments._historical_task, tasks):
        at = np.searchsorted(log.checkpoints, min(1_000_000, int(hist_cfg["n_max"])))
        at = min(at, log.checkpoints.size - 1)
        score = (historical.nonconvergence_score(log)
                 if log.checkpoints.size >= 10 else float("nan"))
        hrows.append((index, float(log.min_d1[-1]), float(log.min_d2[-1]),
                      float(log.dseg[-1]), score,
                      float(np.max(log.base_marginal[at:]))))
    experiments.write_csv(run_dir / "historical.csv",
                          ["seed_index", "min_d1", "min_d2", "final_dseg",
                           "score", "base_marginal_tail_max"], hrows)
    hist_block = frozen["historical"]
    passes = sum(1 for r in hrows
                 if r[1] < hist_block["dip_factor"] * d12
                 and r[2] < hist_block["dip_factor"] * d12
                 and r[3] < hist_block["final_dseg_max"]
                 and r[4] > hist_block["score_min"])
    observed["historical"] = {
        "n_max": int(hist_cfg["n_max"]), "seeds": len(hrows), "d12": d12,
        "pass_fraction": passes / len(hrows),
        "min_d1": _quantiles([r[1] for r in hrows]),
        "min_d2": _quantiles([r[2] for r in hrows]),
        "final_dseg": _quantiles([r[3] for r in hrows]),
        "score": _quantiles([r[4] for r in hrows]),
        "base_marginal_tail_max": _quantiles([r[5] for r in hrows]),
    }

    clt_cfg = {"repeats": 3, "n": 4000, "count": 600}
    clt_cfg.update(cfg.get("clt") or {})
    spec2 = default_system("anosov2d")
    crows = []
    for r in range(int(clt_cfg["repeats"])):
        grid, paths = stochastics.clt_ensemble(
            spec2, int(clt_cfg["n"]), int(clt_cfg["count"]), seed=seed + r,
            mapper=mapper)
        rep = stochastics.wiener_tests(paths, grid)
        crows.append((r, rep.ks_pvalue, rep.variance_slope,
                      rep.increment_correlation))
    experiments.write_csv(run_dir / "clt.csv",
                          ["repeat", "ks_pvalue", "variance_slope",
                           "increment_correlation"], crows)
    observed["clt"] = {
        "repeats": len(crows),
        "ks_pvalue": _quantiles([r[1] for r in crows]),
        "variance_slope": _quantiles([r[2] for r in crows]),
        "increment_correlation": _quantiles([r[3] for r in crows]),
    }

    lor_cfg = {"anchors": 2}
    lor_cfg.update(cfg.get("lorenz") or {})
    flow = lorenz.FlowSpec()
    anchors = [(2.0, 1.0, 25.0), (-3.0, 2.0, 20.0), (5.0, -5.0, 30.0)]
    ratios = []
    for x0 in anchors[: int(lor_cfg["anchors"])]:
        ratios.append(lorenz.rk4_order_check(flow, x0=x0))
    experiments.write_csv(run_dir / "rk4.csv", ["anchor", "ratio"],
                          list(enumerate(ratios)))
    observed["rk4_error_ratio"] = _quantiles(ratios)

    sigma_value, _ = stochastics.sigma_exact(spec2)
    observed["sigma_exact"] = sigma_value

    experiments.write_json(run_dir / "candidate.json",
                           {"frozen": frozen, "observed": observed})
