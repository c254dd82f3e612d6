"""Command-line entry point: ``icsmdp run|summarize|plotdata|oracle-check``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Sequence

from .core import ConfigError
from .experiments import (FIGURES, load_config, run_experiment, summarize_dir,
                          write_plot_data)

log = logging.getLogger("icsmdp")


def _run(args) -> int:
    cfg = load_config(args.config)
    if args.command == "oracle-check" and cfg.experiment != "oracle-check":
        raise ConfigError(f"{args.config} is a {cfg.experiment!r} config, not oracle-check")
    records, summary = run_experiment(cfg, args.output, args.workers)
    out = args.output or cfg.output
    log.info("wrote %d records to %s", len(records), out)
    print(json.dumps(summary, indent=2, sort_keys=True))
    if summary["n_flagged"]:
        log.error("%d run(s) flagged", summary["n_flagged"])
        return 1
    if cfg.experiment == "oracle-check" and not summary["passed"]:
        return 1
    return 0


def _summarize(args) -> int:
    summary = summarize_dir(args.output_dir)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 1 if summary["n_flagged"] else 0


def _plotdata(args) -> int:
    path = write_plot_data(args.output_dir, args.figure, args.out)
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="icsmdp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, hlp in (("run", "run an experiment config"),
                      ("oracle-check", "run an oracle-check config; nonzero exit on mismatch")):
        r = sub.add_parser(name, help=hlp)
        r.add_argument("config")
        r.add_argument("--output", help="override the config's output directory")
        r.add_argument("--workers", type=int, help="worker processes (default: ICSMDP_WORKERS or 1)")
        r.set_defaults(func=_run)
    s = sub.add_parser("summarize", help="recompute the summary of a finished run")
    s.add_argument("output_dir")
    s.set_defaults(func=_summarize)
    d = sub.add_parser("plotdata", help="emit (x, y, y_stderr) CSV for one figure")
    d.add_argument("output_dir")
    d.add_argument("figure", choices=sorted(FIGURES))
    d.add_argument("--out")
    d.set_defaults(func=_plotdata)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as e:
        log.error("%s", e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
