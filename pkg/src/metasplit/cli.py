"""Command-line entry point: ``metasplit {fig-a,fig-b,fig-c,counterexample,rates}``.

Exit codes: 0 on success, 2 on a configuration error, 3 on a numerical
failure such as a singular accumulated Hessian.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .harness import ConfigError, parse_config, read_config_file, run, trtr_lambdas, write_outputs

COMMANDS = {
    "fig-a": "fig_a",
    "fig-b": "fig_b",
    "fig-c": "fig_c",
    "counterexample": "counterexample",
    "rates": "rates",
}
FIGURES = ("fig_a", "fig_b", "fig_c")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="metasplit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, experiment in COMMANDS.items():
        p = sub.add_parser(name, help=f"run the {experiment} experiment")
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="root seed (required for figure runs unless the config sets it)")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for replicates")
        p.add_argument("--no-chart", action="store_true", help="skip the SVG chart")
    return parser


def _config_from_args(args):
    experiment = COMMANDS[args.command]
    pairs = read_config_file(args.config) if args.config else {}
    if pairs.get("experiment", experiment) != experiment:
        raise ConfigError(f"config file is for {pairs['experiment']!r}, not {experiment!r}")
    pairs["experiment"] = experiment
    if args.seed is not None:
        pairs["seed"] = str(args.seed)
    if "seed" not in pairs:
        if experiment in FIGURES:
            raise ConfigError("--seed is required for figure runs")
        pairs["seed"] = "0"
    if args.out:
        pairs["output_dir"] = args.out
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return parse_config(pairs).resolved()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        rows = run(cfg, threads=args.threads)
        extra = {"trtr_lambda": trtr_lambdas(cfg)} if cfg.experiment in ("fig_b", "fig_c") else None
        paths = write_outputs(cfg, rows, cfg.output_dir, chart=not args.no_chart, extra=extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for kind, path in sorted(paths.items()):
        print(f"{kind}: {path}")
    return EXIT_OK
