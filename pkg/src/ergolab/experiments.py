"""Reproducible experiment runs: config, seeding, workers, persistence.

Every experiment writes a self-contained run directory

    runs/<timestamp>-<kind>-<seed>/
        manifest.json   resolved config + seed + version (re-runnable)
        *.csv, *.json   outputs (headers documented in docs/formats.md)
        *.svg           plots rendered from the CSVs
        digests.json    sha256 of every output file

Determinism contract: a manifest re-run reproduces every output file
bit-for-bit, whatever ERGOLAB_WORKERS says.  All parallelism is a mapper over
fixed task partitions (per seed, per RNG chunk, per member block) merged in
task order, so worker count can only change wall time.

Floats are serialized with repr (shortest round-trip form), CSVs with unix
newlines, JSON with sorted keys; SVG output is rendered with a pinned hash
salt and no timestamp metadata.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import jsonschema

from . import deviations, entropy, historical, lorenz, lyapunov, stochastics
from .measures import TestFamily, reference_measure
from .rng import stream
from .schedule import geometric_checkpoints
from .torus_maps import (AnosovMatrix, CircleField, Observable, SystemSpec,
                         TorusPoint2, TorusPoint3, default_system)

__all__ = [
    "ExperimentManifest",
    "ResultBundle",
    "run",
    "rerun",
    "worker_count",
    "system_from_config",
    "KINDS",
]

try:
    from importlib.metadata import version as _dist_version
    _VERSION = _dist_version("artifact")
except Exception:  # not installed; tests on a source tree
    _VERSION = "0.0.0"


def worker_count() -> int:
    """Worker processes, from ERGOLAB_WORKERS (default 1)."""
    raw = os.environ.get("ERGOLAB_WORKERS", "1")
    try:
        w = int(raw)
    except ValueError as e:
        raise ValueError(f"ERGOLAB_WORKERS must be an integer, got {raw!r}") from e
    if w < 1:
        raise ValueError("ERGOLAB_WORKERS must be at least 1")
    return w


class _TaskMapper:
    """Order-preserving map over tasks, optionally through a process pool."""

    def __init__(self, workers: int):
        self.workers = workers
        self._pool = None

    def __enter__(self):
        if self.workers > 1:
            self._pool = ProcessPoolExecutor(max_workers=self.workers)
        return self

    def __exit__(self, *exc):
        if self._pool is not None:
            self._pool.shutdown()
        return False

    def __call__(self, fn, items):
        items = list(items)
        if self._pool is None or len(items) <= 1:
            return [fn(it) for it in items]
        return list(self._pool.map(fn, items))


# ---------------------------------------------------------------------------
# serialization helpers

def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    # bare NaN/Infinity are not JSON; degrade to null so jq and strict
    # parsers can read the bundles
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: Path, obj):
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=1) + "\n")


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="\n") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# config resolution

_SYSTEM_ALIASES = {
    "default2d": "anosov2d",
    "default3d": "compactified3d",
    "control": "morse_smale_control",
}


def system_from_config(value) -> SystemSpec:
    """Build a SystemSpec from a config value (alias string or mapping)."""
    if isinstance(value, str):
        return default_system(_SYSTEM_ALIASES.get(value, value))
    d = dict(value)
    raw = d.pop("variant")
    variant = _SYSTEM_ALIASES.get(raw, raw)
    base = default_system(variant,
                          amplitude=float(d.pop("amplitude", 0.05)),
                          control_rate=float(d.pop("control_rate", 0.1)))
    matrix = base.matrix
    if "matrix" in d:
        (a, b), (c, e) = d.pop("matrix")
        matrix = AnosovMatrix(int(a), int(b), int(c), int(e))
    phi = base.phi
    if "phi" in d:
        phi = Observable.from_list(d.pop("phi"))
    if d:
        raise ValueError(f"unknown system keys: {sorted(d)}")
    return SystemSpec(variant, matrix, phi=phi, field=base.field,
                      control_rate=base.control_rate)


def _seeded_start3(spec: SystemSpec, master_seed: int, label: str, index: int) -> TorusPoint3:
    r = stream(master_seed, label, index)
    v = r.random(3)
    return TorusPoint3(TorusPoint2(v[0], v[1]), v[2])


def _merge(defaults: dict, override: dict) -> dict:
    out = dict(defaults)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


# ---------------------------------------------------------------------------
# manifest and bundle

@dataclass(frozen=True)
class ExperimentManifest:
    kind: str
    config: dict
    master_seed: int
    version: str
    created: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "config": self.config,
                "master_seed": self.master_seed, "version": self.version,
                "created": self.created}

    @staticmethod
    def from_dict(d: dict) -> "ExperimentManifest":
        return ExperimentManifest(kind=d["kind"], config=d["config"],
                                  master_seed=int(d["master_seed"]),
                                  version=str(d.get("version", "")),
                                  created=str(d.get("created", "")))


@dataclass(frozen=True)
class ResultBundle:
    run_dir: Path
    manifest: ExperimentManifest
    files: dict  # name -> sha256 of every output file
    incomplete: bool = False

    def digest_of(self, name: str) -> str:
        return self.files[name]


# ---------------------------------------------------------------------------
# schemas and defaults per experiment kind

_SYSTEM_SCHEMA = {
    "oneOf": [
        {"type": "string"},
        {
            "type": "object",
            "properties": {
                "variant": {"type": "string"},
                "amplitude": {"type": "number", "exclusiveMinimum": 0},
                "control_rate": {"type": "number", "exclusiveMinimum": 0},
                "matrix": {"type": "array"},
                "phi": {"type": "array"},
            },
            "required": ["variant"],
            "additionalProperties": False,
        },
    ]
}

_ENSEMBLE_SCHEMA = {
    "type": "object",
    "properties": {
        "sampling": {"enum": ["grid", "uniform_random", "unstable_segment"]},
        "count": {"type": "integer", "minimum": 1},
        "dimension": {"enum": [2, 3]},
        "base": {"type": "array"},
        "extent": {"type": "array"},
        "length": {"type": "number"},
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}

_POSINT = {"type": "integer", "minimum": 1}
_NUM = {"type": "number"}

SCHEMAS = {
    "simulate": {
        "type": "object",
        "properties": {
            "seed": {"type": "integer"}, "system": _SYSTEM_SCHEMA,
            "steps": {"type": "integer", "minimum": 0}, "ratio": _NUM,
            "max_norm": _POSINT, "start": {"type": ["array", "null"]},
        },
        "additionalProperties": False,
    },
    "exponents": {
        "type": "object",
        "properties": {
            "seed": {"type": "integer"}, "system": _SYSTEM_SCHEMA,
            "seeds": _POSINT, "n": _POSINT, "checkpoints": {"type": "array"},
        },
        "additionalProperties": False,
    },
    "sigma": {
        "type": "object",
        "properties": {
            "seed": {"type": "integer"}, "system": _SYSTEM_SCHEMA,
            "lag_max": _POSINT, "gk_samples": _POSINT,
            "var_n": _POSINT, "var_ensemble": _POSINT,
        },
        "additionalProperties": False,
    },
    "clt": {
        "type": "object",
        "properties": {
            "seed": {"type": "integer"}, "system": _SYSTEM_SCHEMA,
            "n": _POSINT,
            # wiener_tests refuses fewer paths, so reject before running
            "count": {"type": "integer", "minimum": 500},
            "grid": _POSINT,
            "sigma": {"type": ["number", "null"]},
        },
        "additionalProperties": False,
    },
    "deviation": {
        "type": "object",
        "properties": {
            "seed": {"type": "integer"}, "system": _SYSTEM_SCHEMA,
            "ensemble": _ENSEMBLE_SCHEMA,
            "observable": {"type": ["array", "string"]},
            "epsilons": {"type": "array", "items": _NUM, "minItems": 1},
            "n_list": {"type": "array", "items": _POSINT, "minItems": 1},
            "target": {"type": ["array", "null"]},
        },
        "additionalProperties": False,
    },
    "entropy": {
        "type": "object",
        "properties": {
            "seed": {"type": "integer"}, "system": _SYSTEM_SCHEMA,
            "segment": _ENSEMBLE_SCHEMA, "rho": _NUM,
            # the box-count slope refuses fewer than 4 depths
            "n_list": {"type": "array", "items": {"type": "integer", "minimum": 0},
                       "minItems": 4},
            "orbit_length": _POSINT, "bowen_center": _NUM,
            "pesin_subspaces": {"type": "array", "items": {"type": "string"}},
        },
        "additionalProperties": False,
    },
    "historical": {
        "type": "object",
        "properties": {
            "seed": {"type": "integer"}, "system": _SYSTEM_SCHEMA,
            "seeds": _POSINT, "n_max": _POSINT, "ratio": _NUM,
            "max_norm": _POSINT,
        },
        "additionalProperties": False,
    },
    "lorenz": {
        "type": "object",
        "properties": {
            "seed": {"type": "integer"},
            "flow": {"type": "object"},
            "observable": {"type": "string"},
            "agreement_starts": {"type": "integer", "minimum": 0},
            "agreement_T": _NUM,
            "ensemble": {"type": "integer", "minimum": 0},
            "epsilon": _NUM,
            "t_list": {"type": "array", "items": _NUM},
            "reference_T": _NUM,
            "order_check": {"type": "boolean"},
        },
        "additionalProperties": False,
    },
    "calibrate": {
        "type": "object",
        "properties": {
            "seed": {"type": "integer"},
            "historical": {"type": "object"},
            "clt": {"type": "object"},
            "lorenz": {"type": "object"},
        },
        "additionalProperties": False,
    },
}

DEFAULTS = {
    "simulate": {"seed": 0, "system": "default3d", "steps": 100_000,
                 "ratio": 1.3, "max_norm": 2, "start": None},
    "exponents": {"seed": 0, "system": "default3d", "seeds": 100,
                  "n": 1_000_000, "checkpoints": [10_000, 100_000, 1_000_000]},
    "sigma": {"seed": 0, "system": "anosov2d", "lag_max": 20,
              "gk_samples": 1_000_000, "var_n": 10_000, "var_ensemble": 10_000},
    "clt": {"seed": 0, "system": "anosov2d", "n": 10_000, "count": 1000,
            "grid": 101, "sigma": None},
    "deviation": {"seed": 0, "system": "anosov2d",
                  "ensemble": {"sampling": "grid", "count": 1_000_000},
                  "observable": "default",
                  "epsilons": [0.1], "n_list": list(range(10, 101, 10)),
                  "target": None},
    "entropy": {"seed": 0, "system": "anosov2d",
                "segment": {"sampling": "unstable_segment", "count": 1,
                            "length": 0.1},
                "rho": 0.02, "n_list": [2, 3, 4, 5, 6, 7, 8],
                "orbit_length": 2000, "bowen_center": 0.05,
                "pesin_subspaces": []},
    "historical": {"seed": 0, "system": "default3d", "seeds": 4,
                   "n_max": 1_000_000, "ratio": 1.3, "max_norm": 2},
    "lorenz": {"seed": 0, "flow": {}, "observable": "z",
               "agreement_starts": 5, "agreement_T": 10_000.0,
               "ensemble": 2000, "epsilon": 2.0,
               "t_list": [20, 40, 60, 80, 100, 120, 140, 160, 180, 200],
               "reference_T": 20_000.0, "order_check": True},
    "calibrate": {"seed": 0, "historical": {}, "clt": {}, "lorenz": {}},
}

KINDS = tuple(DEFAULTS)


# ---------------------------------------------------------------------------
# per-kind runners; each writes output files into run_dir

def _run_simulate(cfg, run_dir: Path, mapper):
    spec = system_from_config(cfg["system"])
    schedule = geometric_checkpoints(int(cfg["steps"]), float(cfg["ratio"]))
    if cfg["start"] is None:
        start = _seeded_start3(spec, int(cfg["seed"]), "start", 0)
    else:
        x1, x2, t = (float(v) for v in cfg["start"])
        start = TorusPoint3(TorusPoint2(x1, x2), t)
    family = TestFamily(3, int(cfg["max_norm"]))
    log = historical.scan_orbit(spec, start, int(cfg["steps"]), schedule, family)
    write_csv(run_dir / "oscillation.csv",
              ["n", "d1", "d2", "dseg", "min_d1", "min_d2"], log.csv_rows())
    write_json(run_dir / "vectors.json", {
        "family": family.to_dict(),
        "checkpoints": log.checkpoints,
        "vectors": log.vectors,
        "start": [start.base.x1, start.base.x2, start.t],
    })
    summary = {
        "final_d1": float(log.d1[-1]), "final_d2": float(log.d2[-1]),
        "final_dseg": float(log.dseg[-1]),
        "final_base_marginal": float(log.base_marginal[-1]),
        "min_d1": float(log.min_d1[-1]), "min_d2": float(log.min_d2[-1]),
    }
    if log.checkpoints.size >= 10:
        summary["nonconvergence_score"] = historical.nonconvergence_score(log)
    write_json(run_dir / "summary.json", summary)


def _exponent_task(args):
    spec, master_seed, index, n, chk = args
    start = _seeded_start3(spec, master_seed, "exponents", index)
    trace = lyapunov.center_exponent_trace(spec, start, n, chk)
    return index, start, trace


def _run_exponents(cfg, run_dir: Path, mapper):
    spec = system_from_config(cfg["system"])
    n = int(cfg["n"])
    keep = sorted({int(v) for v in cfg["checkpoints"] if 0 < int(v) <= n})
    if not keep or keep[-1] != n:
        keep.append(n)
    chk = np.asarray(keep, dtype=np.int64)
    tasks = [(spec, int(cfg["seed"]), i, n, chk) for i in range(int(cfg["seeds"]))]
    finals = []
    trace_rows = []
    for index, start, trace in mapper(_exponent_task, tasks):
        finals.append((index, start.base.x1, start.base.x2, start.t, trace.final))
        for nn, lam in trace.rows():
            trace_rows.append((index, nn, lam))
    write_csv(run_dir / "finals.csv", ["seed_index", "x1", "x2", "t", "lambda_c"], finals)
    write_csv(run_dir / "traces.csv", ["seed_index", "n", "lambda_c"], trace_rows)
    lams = np.array([f[-1] for f in finals])
    write_json(run_dir / "summary.json", {
        "n": n, "seeds": len(finals),
        "max_abs_lambda": float(np.max(np.abs(lams))),
        "median_abs_lambda": float(np.median(np.abs(lams))),
    })


def _run_sigma(cfg, run_dir: Path, mapper):
    spec = system_from_config(cfg["system"])
    seed = int(cfg["seed"])
    gk = stochastics.estimate_sigma_green_kubo(
        spec, int(cfg["lag_max"]), int(cfg["gk_samples"]), seed, mapper=mapper)
    var_value, var_se = stochastics.estimate_sigma_variance(
        spec, int(cfg["var_n"]), int(cfg["var_ensemble"]), seed,
        with_stderr=True, mapper=mapper)
    exact, lags = stochastics.sigma_exact(spec)
    combined = math.sqrt(gk.stderr ** 2 + var_se ** 2)
    write_csv(run_dir / "correlations.csv", ["lag", "correlation", "partial_sum"],
              [(k, gk.correlations[k], gk.partial_sums[k])
               for k in range(gk.lag_max + 1)])
    write_json(run_dir / "sigma.json", {
        "green_kubo": gk.to_dict(),
        "variance": {"value": var_value, "stderr": var_se,
                     "n": int(cfg["var_n"]), "ensemble": int(cfg["var_ensemble"])},
        "exact": {"value": exact, "lags": {str(k): v for k, v in lags.items()}},
        "agreement_z": abs(gk.variance_estimate - var_value) / combined,
    })


def _run_clt(cfg, run_dir: Path, mapper):
    spec = system_from_config(cfg["system"])
    t_grid, paths = stochastics.clt_ensemble(
        spec, int(cfg["n"]), int(cfg["count"]), int(cfg["grid"]),
        int(cfg["seed"]), cfg["sigma"], mapper=mapper)
    report = stochastics.wiener_tests(paths, t_grid)
    write_csv(run_dir / "paths.csv",
              ["member"] + [repr(float(t)) for t in t_grid],
              [(i, *row) for i, row in enumerate(paths)])
    write_json(run_dir / "wiener.json", report.to_dict())


def _observable_from_config(value) -> Observable:
    if value == "default":
        from .torus_maps import default_observable
        return default_observable()
    return Observable.from_list(value)


def _run_deviation(cfg, run_dir: Path, mapper):
    spec = system_from_config(cfg["system"])
    ens = deviations.EnsembleSpec.from_dict(dict(cfg["ensemble"]))
    obs = _observable_from_config(cfg["observable"])
    target = None if cfg["target"] is None else tuple(cfg["target"])
    rows = []
    fits = {}
    for eps in cfg["epsilons"]:
        curve = deviations.deviant_fraction(spec, ens, obs, float(eps),
                                            cfg["n_list"], target, mapper=mapper)
        for n, c, total, frac in curve.csv_rows():
            rows.append((float(eps), n, c, total, frac))
        fits[repr(float(eps))] = curve.to_dict()
    write_csv(run_dir / "deviation.csv",
              ["epsilon", "n", "deviant_count", "total", "fraction"], rows)
    write_json(run_dir / "ratefit.json", fits)


def _run_entropy(cfg, run_dir: Path, mapper):
    spec = system_from_config(cfg["system"])
    seg_cfg = dict(cfg["segment"])
    seg_cfg.setdefault("sampling", "unstable_segment")
    seg_cfg.setdefault("dimension", 2 if spec.variant == "anosov2d" else 3)
    seg = deviations.EnsembleSpec.from_dict(seg_cfg)
    rho = float(cfg["rho"])
    n_list = [int(v) for v in cfg["n_list"]]
    results = []
    h = entropy.u_entropy_estimate(spec, seg, rho, n_list, results=results)
    write_csv(run_dir / "counts.csv", ["n", "rho", "cardinality", "log_cardinality"],
              [(r.n, r.rho, r.cardinality, r.log_cardinality) for r in results])
    gr = entropy.gibbs_residual(spec, seg, rho, n_list,
                                orbit_length=int(cfg["orbit_length"]))
    bowen_rows = []
    center = float(cfg["bowen_center"])
    for n in n_list:
        bowen_rows.append((n, entropy.bowen_ball_volume(spec, seg, center, n, rho)))
    write_csv(run_dir / "bowen.csv", ["n", "length"], bowen_rows)
    report = {
        "u_entropy": h,
        "log_expansion": spec.matrix.log_expansion,
        "gibbs": {"entropy_estimate": gr.entropy_estimate,
                  "jacobian_integral": gr.jacobian_integral,
                  "residual": gr.residual},
        "maximality_verified": all(r.maximality_verified for r in results),
    }
    pesin = {}
    for sub in cfg["pesin_subspaces"]:
        rep = entropy.pesin_check(spec, seg, rho, n_list, subspace=sub)
        pesin[sub] = rep.to_dict()
    if pesin:
        report["pesin"] = pesin
    write_json(run_dir / "report.json", report)


def _historical_task(args):
    spec, master_seed, index, n_max, ratio, max_norm = args
    start = _seeded_start3(spec, master_seed, "historical", index)
    family = TestFamily(3, max_norm)
    schedule = geometric_checkpoints(n_max, ratio)
    log = historical.scan_orbit(spec, start, n_max, schedule, family)
    return index, start, log


def _run_historical(cfg, run_dir: Path, mapper):
    spec = system_from_config(cfg["system"])
    if spec.variant not in ("compactified3d", "morse_smale_control"):
        raise ValueError("historical runs need a 3D skew variant")
    n_max = int(cfg["n_max"])
    tasks = [(spec, int(cfg["seed"]), i, n_max, float(cfg["ratio"]),
              int(cfg["max_norm"]))
             for i in range(int(cfg["seeds"]))]
    family = TestFamily(3, int(cfg["max_norm"]))
    nu1 = reference_measure(family, "nu1")
    nu2 = reference_measure(family, "nu2")
    from .measures import weak_star_distance
    d12 = weak_star_distance(nu1, nu2)
    summary_rows = []
    for index, start, log in mapper(_historical_task, tasks):
        write_csv(run_dir / f"orbit-{index:03d}.csv",
                  ["n", "d1", "d2", "dseg", "min_d1", "min_d2"], log.csv_rows())
        write_json(run_dir / f"vectors-{index:03d}.json", {
            "checkpoints": log.checkpoints, "vectors": log.vectors,
            "start": [start.base.x1, start.base.x2, start.t],
        })
        # base-marginal at the first checkpoint >= 1e6 (or the last one)
        at = np.searchsorted(log.checkpoints, min(1_000_000, n_max))
        at = min(at, log.checkpoints.size - 1)
        score = (historical.nonconvergence_score(log)
                 if log.checkpoints.size >= 10 else float("nan"))
        summary_rows.append((
            index, start.base.x1, start.base.x2, start.t,
            float(log.min_d1[-1]), float(log.min_d2[-1]),
            float(log.dseg[-1]), score,
            float(np.max(log.base_marginal[at:])),
        ))
    write_csv(run_dir / "summary.csv",
              ["seed_index", "x1", "x2", "t", "min_d1", "min_d2",
               "final_dseg", "score", "base_marginal_tail_max"],
              summary_rows)
    write_json(run_dir / "campaign.json", {
        "n_max": n_max, "seeds": int(cfg["seeds"]), "d12": d12,
        "family": family.to_dict(),
    })


def _lorenz_average_task(args):
    flow, x0, observable, T = args
    return lorenz.flow_average(flow, x0, observable, T)


def _lorenz_dev_block(args):
    flow, starts, observable, epsilon, ts, reference = args
    report = lorenz.flow_deviation(flow, starts, observable, epsilon, ts,
                                   reference=reference)
    return report.curve.counts


def _run_lorenz(cfg, run_dir: Path, mapper):
    flow = lorenz.FlowSpec.from_dict(dict(cfg["flow"])) if cfg["flow"] else lorenz.FlowSpec()
    observable = str(cfg["observable"])
    seed = int(cfg["seed"])
    report = {"flow": flow.to_dict(), "observable": observable}

    k = int(cfg["agreement_starts"])
    if k > 0:
        starts = lorenz.sample_flow_starts(k, seed)
        tasks = [(flow, starts[i], observable, float(cfg["agreement_T"]))
                 for i in range(k)]
        averages = mapper(_lorenz_average_task, tasks)
        rows = []
        series_rows = []
        for i, avg in enumerate(averages):
            rows.append((i, *starts[i], avg.T, avg.value))
            for t, v in zip(avg.times, avg.series):
                series_rows.append((i, t, v))
        write_csv(run_dir / "averages.csv",
                  ["start_index", "x0", "y0", "z0", "T", "value"], rows)
        write_csv(run_dir / "series.csv", ["start_index", "t", "running_average"],
                  series_rows)
        vals = np.array([r[-1] for r in rows])
        scale = float(np.mean(np.abs(vals)))
        rel = 0.0 if scale == 0 else float((vals.max() - vals.min()) / scale)
        report["agreement"] = {"values": vals.tolist(), "max_rel_spread": rel}

    m = int(cfg["ensemble"])
    if m > 0:
        dev_starts = lorenz.sample_flow_starts(m, seed + 1)
        reference, reference_se = lorenz._baseline_with_se(
            flow, (2.0, 1.0, 25.0), observable, float(cfg["reference_T"]))
        ts = sorted(float(t) for t in cfg["t_list"])
        eps = float(cfg["epsilon"])
        blocks = [(flow, dev_starts[a:b], observable, eps, ts, reference)
                  for a, b in deviations._member_blocks(m, 512)]
        counts = sum(mapper(_lorenz_dev_block, blocks))
        ns = np.asarray([int(t) for t in ts], dtype=np.int64)
        below = not np.any(counts)
        fit = None if below else deviations.fit_rate(ns, counts / m, counts)
        curve = deviations.DeviationCurve(
            ns=ns, counts=counts, total=m, epsilon=eps,
            target=(reference, reference), fit=fit, below_resolution=below)
        write_csv(run_dir / "deviation.csv",
                  ["T", "deviant_count", "total", "fraction"], curve.csv_rows())
        report["deviation"] = {
            "curve": curve.to_dict(), "reference": reference,
            "reference_se": reference_se,
            "reference_flagged": bool(eps < 5.0 * reference_se),
        }

    if cfg["order_check"]:
        report["rk4_error_ratio"] = lorenz.rk4_order_check(flow)
    write_json(run_dir / "lorenz.json", report)


def _run_calibrate(cfg, run_dir: Path, mapper):
    from .calibration import run_calibration_campaign
    run_calibration_campaign(cfg, run_dir, mapper)


_RUNNERS = {
    "simulate": _run_simulate,
    "exponents": _run_exponents,
    "sigma": _run_sigma,
    "clt": _run_clt,
    "deviation": _run_deviation,
    "entropy": _run_entropy,
    "historical": _run_historical,
    "lorenz": _run_lorenz,
    "calibrate": _run_calibrate,
}


# ---------------------------------------------------------------------------
# run / rerun

def validate_config(kind: str, config: dict):
    if kind not in SCHEMAS:
        raise ValueError(f"unknown experiment kind {kind!r}; known: {sorted(SCHEMAS)}")
    jsonschema.validate(config, SCHEMAS[kind])


def resolve_config(kind: str, config: dict | None) -> dict:
    if kind not in DEFAULTS:
        raise ValueError(f"unknown experiment kind {kind!r}; known: {sorted(DEFAULTS)}")
    resolved = _merge(DEFAULTS[kind], config or {})
    validate_config(kind, resolved)
    return resolved


def _make_run_dir(out_root, kind: str, seed: int, stamp: str | None) -> Path:
    root = Path(out_root)
    root.mkdir(parents=True, exist_ok=True)
    if stamp is None:
        stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%S")
    base = f"{stamp}-{kind}-{seed}"
    candidate = root / base
    k = 1
    while candidate.exists():
        candidate = root / f"{base}-{k}"
        k += 1
    candidate.mkdir()
    return candidate


def run(kind: str, config: dict | None = None, out_root="runs",
        stamp: str | None = None, plots: bool = True,
        workers: int | None = None) -> ResultBundle:
    """Execute one experiment, write its bundle, return it.

    The bundle is complete when every runner output, plot, manifest, and
    digest file landed; on a mid-run failure a partial manifest with
    ``incomplete: true`` is left behind and the error propagates.
    """
    resolved = resolve_config(kind, config)
    seed = int(resolved.get("seed", 0))
    run_dir = _make_run_dir(out_root, kind, seed, stamp)
    manifest = ExperimentManifest(kind=kind, config=resolved, master_seed=seed,
                                  version=_VERSION,
                                  created=_dt.datetime.now(_dt.timezone.utc).isoformat())
    if workers is None:
        workers = worker_count()
    try:
        with _TaskMapper(workers) as mapper:
            _RUNNERS[kind](resolved, run_dir, mapper)
        if plots:
            from .plots import emit_plots
            emit_plots(run_dir, kind)
    except Exception:
        write_json(run_dir / "manifest.json",
                   {**manifest.to_dict(), "incomplete": True})
        raise
    write_json(run_dir / "manifest.json", manifest.to_dict())
    files = {}
    for p in sorted(run_dir.iterdir()):
        if p.name in ("digests.json",):
            continue
        files[p.name] = file_digest(p)
    write_json(run_dir / "digests.json", {"files": files})
    return ResultBundle(run_dir=run_dir, manifest=manifest, files=files)


def load_manifest(path) -> ExperimentManifest:
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    d = json.loads(p.read_text())
    if d.get("incomplete"):
        raise ValueError(f"manifest {p} is marked incomplete; not re-runnable")
    return ExperimentManifest.from_dict(d)


def rerun(path, out_root="runs", workers: int | None = None):
    """Re-execute a manifest; returns (bundle, digests_match).

    Output files must reproduce bit-for-bit; the manifest itself (with its
    fresh timestamp) and the digest list are excluded from the comparison.
    """
    src = Path(path)
    if src.is_file():
        src = src.parent
    manifest = load_manifest(src)
    raw = json.loads((src / "digests.json").read_text())
    old = raw.get("files") if isinstance(raw, dict) else None
    if not isinstance(old, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in old.items()):
        raise ValueError(f"corrupt digest file in {src}")
    bundle = run(manifest.kind, manifest.config, out_root=out_root,
                 workers=workers)
    skip = {"manifest.json"}
    new = {k: v for k, v in bundle.files.items() if k not in skip}
    old = {k: v for k, v in old.items() if k not in skip}
    return bundle, new == old
