"""Command line entry point.

``srotlab run --config scenario.json`` executes a full scenario. Every other
subcommand runs a single experiment of that kind; its config file holds
``frame``, optional ``options``/``seed``/``measures`` and the experiment
fields at top level. For ``ot``, ``transport`` and ``distmatrix`` the
measure fields may name CSV files directly.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, IoError, SrotlabError
from .lab import EXIT_CONFIG, EXIT_SOLVER, KINDS, Scenario, run

log = logging.getLogger("srotlab")

SCENARIO_KEYS = ("frame", "options", "seed", "measures", "output")


def _load_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None


def single_experiment(kind, cfg):
    """Wrap a one-experiment config into a scenario dict."""
    scen = {k: cfg[k] for k in SCENARIO_KEYS if k in cfg}
    exp = {k: v for k, v in cfg.items() if k not in SCENARIO_KEYS}
    exp["kind"] = kind
    exp.setdefault("name", kind)
    measures = dict(scen.get("measures", {}))
    for f in ("points", "source", "target"):
        v = exp.get(f)
        if isinstance(v, str) and v not in measures and v.lower().endswith(".csv"):
            measures[v] = {"file": v}
    scen["measures"] = measures
    scen["experiments"] = [exp]
    return scen


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser():
    ap = argparse.ArgumentParser(prog="srotlab", description="Sub-Riemannian geometry and optimal transport laboratory.")
    ap.add_argument("--version", action="version", version=f"srotlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in (*KINDS, "run"):
        p = sub.add_parser(name, help="run a scenario" if name == "run" else f"single {name} experiment")
        p.add_argument("--config", help="JSON scenario (run) or experiment config")
        p.add_argument("--out", help="output directory (default: scenario 'output' or ./srotlab-out)")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for distance tables")
        p.add_argument("-v", "--verbose", action="count", default=0)
        if name != "run":
            p.add_argument("--frame", help="frame id, overrides the config")
            p.add_argument(
                "--set",
                action="append",
                default=[],
                metavar="KEY=VALUE",
                help="experiment field as JSON, e.g. --set x='[0,0,0]'",
            )
    return ap


def _scenario(args):
    if args.command == "run":
        if not args.config:
            raise ConfigError("run needs --config")
        return Scenario.load(args.config)
    cfg = _load_json(args.config) if args.config else {}
    base = Path(args.config).parent if args.config else Path.cwd()
    if args.frame:
        cfg["frame"] = args.frame
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg[key] = _parse_value(val)
    return Scenario.from_dict(single_experiment(args.command, cfg), base_dir=base)


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        result = run(_scenario(args), out_dir=args.out, seed=args.seed, threads=args.threads)
    except (ConfigError, IoError) as exc:
        print(f"srotlab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SrotlabError as exc:
        print(f"srotlab: solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for name, rep in result.reports.items():
        failed = [c["metric"] for c in rep["checks"] if not c["passed"]]
        state = "ok" if not failed else "FAILED " + ", ".join(failed)
        print(f"{name}: {state}")
    print(f"artifacts in {result.out_dir}")
    return result.status


if __name__ == "__main__":
    sys.exit(main())
