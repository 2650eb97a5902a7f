"""Command line interface: ``ais run | sweep | oracle | recipes``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Sequence

from .config import RunConfig, SweepConfig, load_json
from .errors import AISError, ConfigError
from .experiment import run_experiment, run_sweep
from .oracle import oracle_table
from .partition import make_equal_partition
from .recipes import get_recipe, list_recipes
from .targets import Rectangle, target_from_json

__all__ = ["main", "build_parser"]


def _out_dir(args) -> str:
    return args.out_dir or os.environ.get("AIS_OUT_DIR") or "out"


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", help="output root (default: $AIS_OUT_DIR or ./out)")
    p.add_argument("--jobs", type=int, default=1, help="parallel replicate workers")
    p.add_argument("--seed-offset", type=int, default=0, help="added to every configured seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ais", description="Partition-based adaptive importance sampling")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("run", help="run one experiment config (or a built-in recipe)")
    p.add_argument("config", nargs="?", help="run config JSON file")
    p.add_argument("--recipe", help="run a built-in recipe instead of a config file")
    _common(p)

    p = sub.add_parser("sweep", help="run a one-parameter sweep")
    p.add_argument("config", help="sweep config JSON file")
    _common(p)

    p = sub.add_parser("oracle", help="print exact cell masses as JSON")
    p.add_argument("target", help='target JSON, e.g. {"family": "exp-flat", "params": {}}')
    p.add_argument("partition", help='partition JSON: {"K": k} or a list of {"lo": [...], "hi": [...]}')
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)

    p = sub.add_parser("recipes", help="list built-in recipes, or print one as JSON")
    p.add_argument("name", nargs="?")
    return parser


def _load_partition(obj, target) -> list[Rectangle]:
    if isinstance(obj, dict) and "K" in obj:
        return [a.cell for a in make_equal_partition(target.domain, obj["K"], 1.0)]
    cells = obj.get("cells") if isinstance(obj, dict) else obj
    if not isinstance(cells, list) or not cells:
        raise ConfigError('partition must be {"K": k}, {"cells": [...]} or a nonempty list of cells', "partition")
    return [Rectangle.from_json(c) for c in cells]


def _json_arg(text: str):
    if os.path.exists(text):
        return load_json(text)
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        raise ConfigError(f"not a file or JSON literal: {text!r}") from None


def _items_json(items) -> list[dict]:
    out = []
    for item in items:
        kind = "sweep" if isinstance(item, SweepConfig) else "run"
        out.append({"kind": kind, "config": item.to_json()})
    return out


def _run_items(items, args) -> dict:
    out_dir = _out_dir(args)
    report = {}
    for item in items:
        if isinstance(item, SweepConfig):
            rows = run_sweep(item, out_dir, args.jobs, args.seed_offset)
            report[f"sweep-{item.base.name}-{item.axis}"] = [
                {k: v for k, v in r.items() if k != "per_seed_cum_regret"} for r in rows
            ]
        else:
            summary = run_experiment(item, out_dir, args.jobs, args.seed_offset)
            reps = summary["replicates"]
            report[item.name] = {
                "mean_final_cum_regret": sum(r["final_cum_regret"] for r in reps) / len(reps),
                "mean_final_z_hat_total": sum(r["final_z_hat_total"] for r in reps) / len(reps),
            }
    return report


def _main(argv: Sequence[str] | None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None or (args.command == "recipes" and args.name is None):
        for name, desc in list_recipes():
            print(f"{name:20s} {desc}")
        return 0
    if args.command == "recipes":
        print(json.dumps(_items_json(get_recipe(args.name).items()), indent=1))
        return 0
    if args.command == "oracle":
        target = target_from_json(_json_arg(args.target))
        cells = _load_partition(_json_arg(args.partition), target)
        table = oracle_table(target, cells, args.alpha, args.tol)
        print(json.dumps(table.to_json()))
        return 0
    if args.command == "run":
        if args.recipe:
            items = get_recipe(args.recipe).items()
        elif args.config:
            items = [RunConfig.from_json(load_json(args.config))]
        else:
            raise ConfigError("give a config file or --recipe NAME")
        print(json.dumps(_run_items(items, args), indent=1, default=str))
        return 0
    if args.command == "sweep":
        items = [SweepConfig.from_json(load_json(args.config))]
        print(json.dumps(_run_items(items, args), indent=1, default=str))
        return 0
    parser.error(f"unknown command {args.command}")
    return 2


def main(argv: Sequence[str] | None = None) -> int:
    try:
        return _main(argv)
    except (AISError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ConfigError) and exc.path:
            err["path"] = exc.path
        print(json.dumps(err), file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1


if __name__ == "__main__":
    sys.exit(main())
