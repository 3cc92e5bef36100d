"""Command-line front end: one subcommand per experiment kind.

    ergolab sigma --samples 2000000
    ergolab historical --seeds 20 --n 100000000 --out runs
    ergolab deviation --set ensemble.count=250000 --set epsilons='[0.05,0.1]'
    ergolab rerun runs/20260301T120000-sigma-0

Configuration precedence: built-in defaults, then --config JSON, then sugar
flags, then --set overrides (applied in order).  Worker processes are
controlled only by the ERGOLAB_WORKERS environment variable, never by a
flag, so a manifest means the same thing on every machine.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure
(divergence, resolution floor), 4 reproducibility failure (digest mismatch
or a run left incomplete).
"""

from __future__ import annotations

import argparse
import json
import sys

import jsonschema

from . import experiments
from .entropy import GridResolutionError
from .lorenz import DivergenceError

__all__ = ["main"]

# sugar flag -> dotted config path, per kind
_SUGAR = {
    "simulate": {"system": "system", "steps": "steps"},
    "exponents": {"system": "system", "seeds": "seeds", "n": "n"},
    "sigma": {"system": "system", "lags": "lag_max", "samples": "gk_samples"},
    "clt": {"system": "system", "n": "n", "samples": "count"},
    "deviation": {"system": "system", "samples": "ensemble.count"},
    "entropy": {"system": "system"},
    "historical": {"system": "system", "seeds": "seeds", "n": "n_max"},
    "lorenz": {"samples": "ensemble"},
    "calibrate": {},
}

_SUGAR_HELP = {
    "system": "system alias or variant name (default2d, default3d, control, ...)",
    "steps": "orbit length",
    "seeds": "number of independent seeds",
    "n": "orbit length / time horizon",
    "lags": "maximum autocorrelation lag",
    "samples": "sample or ensemble size",
}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _apply_dotted(config: dict, dotted: str, value):
    keys = dotted.split(".")
    node = config
    for k in keys[:-1]:
        nxt = node.get(k)
        if not isinstance(nxt, dict):
            nxt = {}
            node[k] = nxt
        node = nxt
    node[keys[-1]] = value


def _build_config(args) -> dict:
    config = {}
    if args.config:
        with open(args.config) as f:
            loaded = json.load(f)
        if not isinstance(loaded, dict):
            raise ValueError("config file must hold a JSON object")
        config.update(loaded)
    for flag, path in _SUGAR[args.kind].items():
        value = getattr(args, flag, None)
        if value is not None:
            _apply_dotted(config, path, value)
    if args.seed is not None:
        config["seed"] = args.seed
    for item in args.set or []:
        if "=" not in item:
            raise ValueError(f"--set expects path=value, got {item!r}")
        dotted, _, raw = item.partition("=")
        _apply_dotted(config, dotted, _parse_value(raw))
    return config


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ergolab",
                                description="numerical ergodic-theory laboratory")
    sub = p.add_subparsers(dest="kind", required=True)
    for kind in experiments.KINDS:
        sp = sub.add_parser(kind, help=f"run a {kind} experiment")
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--set", action="append", metavar="PATH=VALUE",
                        help="dotted-path config override (value parsed as JSON)")
        sp.add_argument("--seed", type=int, default=None, help="master seed")
        sp.add_argument("--out", default="runs", help="run directory root")
        sp.add_argument("--stamp", default=None, help=argparse.SUPPRESS)
        sp.add_argument("--no-plots", action="store_true",
                        help="skip SVG rendering")
        for flag in _SUGAR[kind]:
            if flag == "system":
                sp.add_argument("--system", default=None,
                                help=_SUGAR_HELP["system"])
            else:
                sp.add_argument(f"--{flag}", type=int, default=None,
                                help=_SUGAR_HELP[flag])
    sp = sub.add_parser("rerun", help="re-execute a manifest and compare digests")
    sp.add_argument("path", help="run directory or manifest.json")
    sp.add_argument("--out", default="runs", help="run directory root")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)

    if args.kind == "rerun":
        try:
            bundle, match = experiments.rerun(args.path, out_root=args.out)
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as e:
            print(f"config error: {e}", file=sys.stderr)
            return 2
        print(bundle.run_dir)
        if not match:
            print("digest mismatch against original run", file=sys.stderr)
            return 4
        print("digests reproduced")
        return 0

    try:
        config = _build_config(args)
    except (OSError, ValueError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    try:
        bundle = experiments.run(args.kind, config, out_root=args.out,
                                 stamp=args.stamp, plots=not args.no_plots)
    except (jsonschema.ValidationError, ValueError, KeyError, TypeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (DivergenceError, GridResolutionError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # run dir is marked incomplete
        print(f"run failed, bundle incomplete: {e}", file=sys.stderr)
        return 4
    print(bundle.run_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
