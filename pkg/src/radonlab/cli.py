"""Command line entry point: ``radonlab run|fixtures|region``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import ConfigError, ExperimentConfig, run_experiment, write_outputs
from .fixtures import get_map, list_fixtures
from .circle.region import proven_region
from .threads import set_threads

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 2, 3


def _cmd_run(args) -> int:
    path = Path(args.config)
    try:
        cfg = ExperimentConfig.from_json(path.read_text(encoding="utf-8"))
    except OSError as e:
        print(f"error: cannot read {path}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, TypeError) as e:
        problems = e.problems if isinstance(e, ConfigError) else [("<config>", str(e))]
        for where, msg in problems:
            print(f"{path}: {where}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    res = run_experiment(cfg)
    out = Path(args.output) if args.output else Path(cfg.output)
    csv_path, json_path = write_outputs(res, out)
    print(f"wrote {csv_path} and {json_path}")
    if res.partial:
        print("warning: budget exceeded for some rows; results are partial", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_fixtures(args) -> int:
    reg = list_fixtures()
    if args.json:
        print(json.dumps(reg, indent=2))
        return EXIT_OK
    print("maps:")
    for name, info in reg["maps"].items():
        flag = "" if info["admissible"] else "  [not admissible]"
        print(f"  {name:22s} {info['description']}{flag}")
    print("kernels:")
    for name, desc in reg["kernels"].items():
        print(f"  {name:22s} {desc}")
    return EXIT_OK


def _cmd_region(args) -> int:
    try:
        P = get_map(args.map)
    except KeyError as e:
        print(f"error: {e.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        v = proven_region(P, args.eps_prime, args.r, args.s)
    except (ValueError, ZeroDivisionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(v.to_dict()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="radonlab", description=__doc__)
    p.add_argument("--threads", type=int, default=None, help="worker pool cap (RADONLAB_THREADS overrides)")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a JSON config")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output prefix; overrides the config's output field")
    r.set_defaults(func=_cmd_run)
    f = sub.add_parser("fixtures", help="list built-in maps and kernels")
    f.add_argument("--json", action="store_true")
    f.set_defaults(func=_cmd_fixtures)
    g = sub.add_parser("region", help="membership in the proven sparse region")
    g.add_argument("--map", required=True)
    g.add_argument("--eps-prime", required=True, type=str)
    g.add_argument("--r", required=True, type=str)
    g.add_argument("--s", required=True, type=str)
    g.set_defaults(func=_cmd_region)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    set_threads(args.threads)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
