"""SVG plots rendered from run-directory CSVs.

Plots are regenerable from the CSVs alone, and the SVGs are byte-stable:
fixed hash salt, no creation date, Agg rendering, data drawn in row order.
An empty CSV (header only) still produces a figure, marked "no data", so a
run with nothing to show remains a complete, digestible bundle.
"""

from __future__ import annotations

import csv
import warnings
from pathlib import Path

import matplotlib
matplotlib.use("Agg", force=True)
import matplotlib as mpl
from matplotlib.figure import Figure

__all__ = ["emit_plots"]

_SALT = "ergolab"


def _save(fig: Figure, path: Path):
    with mpl.rc_context({"svg.hashsalt": _SALT, "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None})


def _read(path: Path):
    """(header, rows) of a CSV, or None if the file is missing."""
    if not path.exists():
        return None
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        return [], []
    return rows[0], rows[1:]


def _axes(title: str, xlabel: str, ylabel: str):
    fig = Figure(figsize=(6.4, 4.2))
    ax = fig.add_subplot(111)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return fig, ax


def _no_data(fig: Figure):
    ax = fig.axes[0]
    ax.text(0.5, 0.5, "no data", transform=ax.transAxes,
            ha="center", va="center", fontsize=18, color="0.5")


def _column(header, rows, name, cast=float):
    j = header.index(name)
    return [cast(r[j]) for r in rows]


def _grouped(header, rows, key, xcol, ycol):
    """{key value: ([x...], [y...])} preserving row order."""
    ki, xi, yi = header.index(key), header.index(xcol), header.index(ycol)
    out = {}
    for r in rows:
        xs, ys = out.setdefault(r[ki], ([], []))
        xs.append(float(r[xi]))
        ys.append(float(r[yi]))
    return out


def _plot_oscillation(path: Path, out: Path, title: str):
    data = _read(path)
    if data is None:
        return []
    header, rows = data
    fig, ax = _axes(title, "n", "weak-star distance")
    if rows:
        ns = _column(header, rows, "n")
        for col, style in (("d1", "-"), ("d2", "-"), ("dseg", "--")):
            ax.plot(ns, _column(header, rows, col), style, label=col)
        ax.set_xscale("log")
        ax.legend()
    else:
        _no_data(fig)
    _save(fig, out)
    return [out]


def _plots_simulate(run_dir: Path):
    return _plot_oscillation(run_dir / "oscillation.csv",
                             run_dir / "oscillation.svg",
                             "empirical-measure oscillation")


def _plots_historical(run_dir: Path):
    written = []
    fig, ax = _axes("distance to the first fiber measure", "n", "d1")
    any_rows = False
    for orbit in sorted(run_dir.glob("orbit-*.csv")):
        header, rows = _read(orbit)
        if not rows:
            continue
        any_rows = True
        ax.plot(_column(header, rows, "n"), _column(header, rows, "d1"),
                lw=0.8, label=orbit.stem)
    if any_rows:
        ax.set_xscale("log")
        if len(ax.lines) <= 8:
            ax.legend(fontsize=7)
    else:
        _no_data(fig)
    out = run_dir / "oscillation.svg"
    _save(fig, out)
    written.append(out)

    data = _read(run_dir / "summary.csv")
    if data is not None:
        header, rows = data
        fig, ax = _axes("per-seed oscillation summary", "seed", "value")
        if rows:
            idx = _column(header, rows, "seed_index")
            for col in ("min_d1", "min_d2", "final_dseg"):
                ax.plot(idx, _column(header, rows, col), "o", ms=3, label=col)
            ax.legend(fontsize=7)
        else:
            _no_data(fig)
        out = run_dir / "summary.svg"
        _save(fig, out)
        written.append(out)
    return written


def _plots_exponents(run_dir: Path):
    written = []
    data = _read(run_dir / "traces.csv")
    if data is not None:
        header, rows = data
        fig, ax = _axes("finite-time center exponents", "n", "lambda_c")
        if rows:
            for _, (xs, ys) in sorted(_grouped(header, rows, "seed_index",
                                                "n", "lambda_c").items()):
                ax.plot(xs, ys, lw=0.6, color="C0", alpha=0.5)
            ax.set_xscale("log")
            ax.axhline(0.0, color="k", lw=0.8)
        else:
            _no_data(fig)
        out = run_dir / "traces.svg"
        _save(fig, out)
        written.append(out)
    data = _read(run_dir / "finals.csv")
    if data is not None:
        header, rows = data
        fig, ax = _axes("final center exponents", "lambda_c", "count")
        if rows:
            ax.hist(_column(header, rows, "lambda_c"), bins=25, color="C0")
        else:
            _no_data(fig)
        out = run_dir / "finals.svg"
        _save(fig, out)
        written.append(out)
    return written


def _plots_sigma(run_dir: Path):
    data = _read(run_dir / "correlations.csv")
    if data is None:
        return []
    header, rows = data
    fig, ax = _axes("summed autocorrelations", "lag", "value")
    if rows:
        lags = _column(header, rows, "lag")
        ax.plot(lags, _column(header, rows, "partial_sum"), "o-",
                label="partial sum")
        ax.plot(lags, _column(header, rows, "correlation"), "s--",
                label="correlation")
        ax.legend()
    else:
        _no_data(fig)
    out = run_dir / "correlations.svg"
    _save(fig, out)
    return [out]


def _plots_clt(run_dir: Path):
    data = _read(run_dir / "paths.csv")
    if data is None:
        return []
    header, rows = data
    fig, ax = _axes("rescaled partial-sum paths", "t", "X(t)")
    if rows:
        ts = [float(v) for v in header[1:]]
        for r in rows[:50]:
            ax.plot(ts, [float(v) for v in r[1:]], lw=0.6, alpha=0.6)
    else:
        _no_data(fig)
    out = run_dir / "paths.svg"
    _save(fig, out)
    return [out]


def _plots_deviation(run_dir: Path):
    data = _read(run_dir / "deviation.csv")
    if data is None:
        return []
    header, rows = data
    fig, ax = _axes("deviant fraction decay", "n", "fraction")
    nonzero = False
    if rows:
        for eps, (xs, ys) in sorted(_grouped(header, rows, "epsilon",
                                             "n", "fraction").items()):
            keep = [(x, y) for x, y in zip(xs, ys) if y > 0]
            if keep:
                nonzero = True
                ax.plot([k[0] for k in keep], [k[1] for k in keep], "o-",
                        label=f"eps={eps}")
        if nonzero:
            ax.set_yscale("log")
            ax.legend()
    if not rows or not nonzero:
        _no_data(fig)
    out = run_dir / "deviation.svg"
    _save(fig, out)
    return [out]


def _plots_entropy(run_dir: Path):
    data = _read(run_dir / "counts.csv")
    if data is None:
        return []
    header, rows = data
    fig, ax = _axes("separated-set growth", "n", "log cardinality")
    if rows:
        ax.plot(_column(header, rows, "n"),
                _column(header, rows, "log_cardinality"), "o-")
    else:
        _no_data(fig)
    out = run_dir / "counts.svg"
    _save(fig, out)
    return [out]


def _plots_lorenz(run_dir: Path):
    written = []
    data = _read(run_dir / "series.csv")
    if data is not None:
        header, rows = data
        fig, ax = _axes("running flow averages", "t", "average")
        if rows:
            for _, (xs, ys) in sorted(_grouped(header, rows, "start_index",
                                               "t", "running_average").items()):
                ax.plot(xs, ys, lw=0.8)
            ax.set_xscale("log")
        else:
            _no_data(fig)
        out = run_dir / "series.svg"
        _save(fig, out)
        written.append(out)
    data = _read(run_dir / "deviation.csv")
    if data is not None:
        header, rows = data
        fig, ax = _axes("flow deviation decay", "T", "fraction")
        pts = ([], [])
        if rows:
            for t, c, total, frac in rows:
                if float(frac) > 0:
                    pts[0].append(float(t))
                    pts[1].append(float(frac))
        if pts[0]:
            ax.plot(pts[0], pts[1], "o-")
            ax.set_yscale("log")
        else:
            _no_data(fig)
        out = run_dir / "deviation.svg"
        _save(fig, out)
        written.append(out)
    return written


def _plots_calibrate(run_dir: Path):
    data = _read(run_dir / "historical.csv")
    if data is None:
        return []
    header, rows = data
    fig, ax = _axes("calibration campaign: oscillation minima", "seed", "value")
    if rows:
        idx = _column(header, rows, "seed_index")
        for col in ("min_d1", "min_d2", "final_dseg"):
            ax.plot(idx, _column(header, rows, col), "o", ms=3, label=col)
        ax.legend(fontsize=7)
    else:
        _no_data(fig)
    out = run_dir / "historical.svg"
    _save(fig, out)
    return [out]


_PLOTTERS = {
    "simulate": _plots_simulate,
    "exponents": _plots_exponents,
    "sigma": _plots_sigma,
    "clt": _plots_clt,
    "deviation": _plots_deviation,
    "entropy": _plots_entropy,
    "historical": _plots_historical,
    "lorenz": _plots_lorenz,
    "calibrate": _plots_calibrate,
}


def emit_plots(run_dir, kind: str):
    """Render the standard figures for one run directory; returns paths."""
    plotter = _PLOTTERS.get(kind)
    if plotter is None:
        warnings.warn(f"no plotter for experiment kind {kind!r}; skipping")
        return []
    return plotter(Path(run_dir))
