"""Command-line entry point.

Subcommands: convergence, crossterm, attention-dump, bench, fit, probe,
r-ablation. Every command takes --config/--seed/--out/--jobs plus typed
overrides of its config keys; flags beat file values beat defaults. Exit
codes: 0 success, 1 usage error, 2 numeric or degeneracy error.
"""

from __future__ import annotations

import argparse
import sys

from ..errors import NumericError
from .bench import run_bench
from .config import COMMANDS, UsageError, build_config, parse_config_file
from .csvio import format_value, write_matrix, write_table
from .experiments import (
    run_attention_dump,
    run_convergence,
    run_crossterm,
    run_fit,
    run_probe,
    run_r_ablation,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; usage is 1 here
        raise UsageError(message)


# flag name -> config key; every value is passed as text and coerced by the
# same parser that handles config files, so errors read identically
_COMMAND_FLAGS = {
    "convergence": ("variant", "d", "k", "p", "n", "r", "seeds", "sweep",
                    "gates", "freqs", "phases", "gains", "filters-q", "filters-k"),
    "crossterm": ("variant", "d", "k", "p", "n", "seeds", "sweep", "gates"),
    "attention-dump": ("variant", "d", "k", "p", "m", "n", "r", "gates", "content",
                       "content-file", "normalized", "causal", "mode",
                       "freqs", "phases", "gains", "filters-q", "filters-k"),
    "bench": ("variant", "d", "k", "p", "n-sweep", "r-sweep", "dv", "reps", "warmup"),
    "fit": ("model", "target", "k", "p", "lr", "iters", "restarts", "tolerance"),
    "probe": ("variant", "d", "k", "p", "n", "r", "seeds", "gates", "train-length",
              "windows", "contents", "mode"),
    "r-ablation": ("variant", "k", "p", "n", "r-train-sweep", "r-test-sweep",
                   "include-exact", "max-offset", "lr", "iters", "restarts", "tolerance"),
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="spenc", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")
    for command in COMMANDS:
        cmd = sub.add_parser(command, help=f"run the {command} experiment")
        cmd.add_argument("--config", help="flat key = value config file")
        cmd.add_argument("--seed", help="master seed (unsigned 64-bit)")
        cmd.add_argument("--out", help="output CSV path")
        cmd.add_argument("--jobs", help="worker threads for sweep/trial fan-out")
        for flag in _COMMAND_FLAGS[command]:
            cmd.add_argument(f"--{flag}", dest=flag.replace("-", "_"))
    return parser


_GLOBAL_KEYS = ("seed", "out", "jobs")


def _dispatch(args) -> int:
    file_values = parse_config_file(args.config) if args.config else {}
    cli_values = {}
    for flag in _GLOBAL_KEYS + tuple(f.replace("-", "_") for f in _COMMAND_FLAGS[args.command]):
        value = getattr(args, flag, None)
        if value is not None:
            cli_values[flag] = value
    cfg = build_config(args.command, file_values, cli_values)
    header = {"command": cfg.command, **cfg.echo()}

    if cfg.command == "attention-dump":
        meta, matrix = run_attention_dump(cfg)
        write_matrix(cfg.out, matrix, {**header, **meta})
        return 0
    if cfg.command == "fit":
        params, columns, trace_rows = run_fit(cfg)
        with open(cfg.out, "w", encoding="utf-8", newline="\n") as handle:
            for key, value in header.items():
                handle.write(f"# {key} = {value}\n")
            for key, value in params.items():
                handle.write(f"{key} = {format_value(value)}\n")
        write_table(cfg.out + ".trace.csv", header, columns, trace_rows)
        return 0

    runner = {
        "convergence": run_convergence,
        "crossterm": run_crossterm,
        "bench": run_bench,
        "probe": run_probe,
        "r-ablation": run_r_ablation,
    }[cfg.command]
    meta, columns, rows = runner(cfg)
    write_table(cfg.out, {**header, **meta}, columns, rows)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("a command is required (see --help)")
        return _dispatch(args)
    except UsageError as exc:
        print(f"spenc: error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"spenc: numeric error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"spenc: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
