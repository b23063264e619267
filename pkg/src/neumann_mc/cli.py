"""``neumann-mc`` command line.

Exit codes: 0 on success, 2 for an invalid configuration or arguments, 3 when
a walk or linear solve fails numerically.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .estimators import MonteCarloError
from .experiments import ConfigError, load_config, run_experiment, table_config
from .geometry import GeometryError
from .wos import precompute_circle_table

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("neumann_mc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="neumann-mc",
                     description="Monte Carlo solvers for Neumann problems on the square.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--seed", type=int, help="root seed (default: config value)")
        p.add_argument("--workers", type=int, help="worker processes (default: all cores)")
        p.add_argument("--out", help="output directory (default: config value)")
        p.add_argument("--n", type=int, help="override the trajectory count")

    run = sub.add_parser("run", help="run an experiment config file")
    run.add_argument("config", help="path to an [experiment] config file")
    common(run)

    table = sub.add_parser("table", help="run the configuration of a result table")
    table.add_argument("number", type=int, choices=range(1, 9), metavar="{1..8}")
    table.add_argument("--table-path", help="circle table file for walk-on-spheres runs")
    common(table)

    pre = sub.add_parser("precompute-wos", help="build a circle table file")
    pre.add_argument("--out", required=True, help="destination file")
    pre.add_argument("--pairs", type=int, default=1_000_000, help="(exit time, point) pairs")
    pre.add_argument("--paths", type=int, default=100_000, help="stored trajectories")
    pre.add_argument("--delta", type=float, default=1e-4, help="Euler step of the table walks")
    pre.add_argument("--seed", type=int, default=12345)
    return parser


def _overrides(args) -> dict:
    out = {"seed": args.seed, "out": args.out, "n": args.n}
    if args.workers is not None:
        out["workers"] = args.workers
    if getattr(args, "table_path", None):
        out["table_path"] = args.table_path
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "precompute-wos":
            if args.pairs < 1 or args.paths < 0 or not args.delta > 0:
                raise ConfigError("need pairs >= 1, paths >= 0 and a positive delta")
            table = precompute_circle_table(args.delta, args.pairs, args.paths,
                                            np.random.default_rng(args.seed))
            table.save(args.out)
            mean, se = table.mean_exit_time()
            print(f"wrote {args.out}: {table.n_pairs} pairs, {table.q_paths} paths, "
                  f"mean exit time {mean:.5f} +- {se:.5f}")
            return EXIT_OK
        if args.command == "run":
            cfg = load_config(args.config, **_overrides(args))
        else:
            cfg = table_config(args.number, **_overrides(args))
        log.info("running %s", cfg.stem)
        result = run_experiment(cfg)
        for path in result.paths:
            print(path)
        return EXIT_OK
    except (ConfigError, GeometryError) as exc:
        print(f"neumann-mc: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MonteCarloError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        print(f"neumann-mc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"neumann-mc: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
