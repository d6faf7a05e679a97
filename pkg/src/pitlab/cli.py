"""Command line entry point: ``pitlab run | compare | gen-data``.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .data import DatasetConfig, export_dataset, generate
from .harness import ConfigError, StrategyConfig, compare, config_from_dict, load_config, run

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _build_parser():
    p = argparse.ArgumentParser(prog="pitlab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train one strategy")
    r.add_argument("--config", required=True, help="JSON RunConfig")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="output directory (overrides out_dir)")
    r.add_argument("--strategy", choices=["pit", "pit_fix", "sinkpit", "dsd", "lo", "dsd_lo"])
    r.add_argument("--epochs", type=int)

    c = sub.add_parser("compare", help="compare finished runs")
    c.add_argument("--runs", required=True, help="comma-separated run directories")
    c.add_argument("--out", required=True, help="report JSON path")

    g = sub.add_parser("gen-data", help="export a synthetic dataset")
    g.add_argument("--config", required=True, help="JSON DatasetConfig, or a RunConfig with a 'dataset' key")
    g.add_argument("--out", required=True)
    return p


def _run(args):
    cfg = load_config(args.config)
    doc = cfg.to_dict()
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out is not None:
        doc["out_dir"] = args.out
    if args.epochs is not None:
        doc["epochs"] = args.epochs
    if args.strategy is not None and args.strategy != doc["strategy"]["name"]:
        # keep shared knobs (epsilon, weights, ...) from the file
        doc["strategy"] = {**doc["strategy"], "name": args.strategy}
        StrategyConfig(**doc["strategy"])
    cfg = config_from_dict(doc)
    out = run(cfg)
    print(out / "report.json")


def _compare(args):
    runs = [r for r in args.runs.split(",") if r]
    for r in runs:
        if not (Path(r) / "epochs.csv").exists():
            raise ConfigError(f"{r} is not a finished run directory")
    compare(runs, args.out)
    print(args.out)


def _gen_data(args):
    try:
        doc = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    doc = doc.get("dataset", doc)
    try:
        cfg = DatasetConfig(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    export_dataset(generate(cfg), args.out, cfg)
    print(args.out)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _run, "compare": _compare, "gen-data": _gen_data}[args.command]
    try:
        handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure after config is a runtime error
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
