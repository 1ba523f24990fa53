"""``sensei-run``: run an experiment from a key=value config file.

Every config key is also a flag of the same name (``--epoch 500``); flags
override the file.  Exit status: 0 success, 2 config error, 3 data error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .data import DataError
from .experiments import ExperimentConfig, build_config, load_config, run_experiment
from .trainers import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sensei-run", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("config", nargs="?", help="key=value config file")
    ap.add_argument("-v", "--verbose", action="store_true")
    for f in dataclasses.fields(ExperimentConfig):
        ap.add_argument(f"--{f.name}", dest=f.name, default=None, metavar="VALUE")
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(ExperimentConfig)
                 if getattr(args, f.name) is not None}
    try:
        cfg = load_config(args.config, overrides) if args.config else build_config(overrides)
        run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
