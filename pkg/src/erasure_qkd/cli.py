"""
Command-line driver: ``erasure-qkd run | compare | replay``.

Every config field is also a flag (``--rounds 100000``, ``--attack blinding``)
and an environment variable (``ERASURE_QKD_ROUNDS``). Precedence, lowest
first: built-in defaults, ``--config`` file, environment, flags.

Exit status: 0 proceed (or replay/compare OK), 2 abort on QBER/information,
1 operational error.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .analysis import Verdict
from .experiment import (
    ExperimentConfig,
    ReplayMismatch,
    load_config,
    replay,
    run_experiment,
    write_artifacts,
)
from .formats import FormatError, format_value, parse_transcript, render_key_values, render_table
from .session import ConfigError

EXIT_OK, EXIT_ERROR, EXIT_ABORT = 0, 1, 2

COMPARE_ROWS = ("protocol", "attack", "keep_rate", "sifted_qber", "sample_qber", "i_alice_eve", "i_alice_bob", "eve_agreement", "verdict")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config fields (override file and environment)")
    for f in fields(ExperimentConfig):
        group.add_argument(
            f"--{f.name}",
            f"--{f.name.replace('_', '-')}",
            dest=f"cfg_{f.name}",
            metavar="VALUE",
            nargs="?" if f.name == "check_mode" else None,
            const="true" if f.name == "check_mode" else None,
        )


def _flags(args: argparse.Namespace) -> dict[str, str]:
    return {
        k[len("cfg_") :]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="erasure-qkd", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one session and write its artifacts")
    run.add_argument("--config", help="flat key=value config file")
    _add_config_flags(run)

    cmp_ = sub.add_parser("compare", help="run two configs and print a side-by-side table")
    cmp_.add_argument("config_a")
    cmp_.add_argument("config_b")
    _add_config_flags(cmp_)

    rep = sub.add_parser("replay", help="recompute a summary from a transcript")
    rep.add_argument("transcript")
    rep.add_argument("--summary", help="summary to check against (default: summary.txt next to the transcript)")
    rep.add_argument("--no-check", action="store_true", help="only print the recomputed summary")
    return parser


def cmd_run(config: ExperimentConfig, out=None) -> int:
    out = out or sys.stdout
    result = run_experiment(config)
    if config.out_dir:
        write_artifacts(result, config.out_dir)
    out.write(render_key_values("summary", result.summary()))
    return EXIT_OK if result.verdict is Verdict.PROCEED else EXIT_ABORT


def cmd_compare(config_a: ExperimentConfig, config_b: ExperimentConfig, out=None) -> int:
    out = out or sys.stdout
    a, b = run_experiment(config_a).summary(), run_experiment(config_b).summary()
    rows = [(k, format_value(a[k]), format_value(b[k])) for k in COMPARE_ROWS]
    out.write(render_table(rows, ("metric", "a", "b")))
    return EXIT_OK


def cmd_replay(transcript: str, summary: Optional[str] = None, check: bool = True, out=None) -> int:
    out = out or sys.stdout
    path = Path(transcript)
    text = path.read_text()
    parse_transcript(text)  # report format errors before looking for the summary
    summary_text = None
    if check:
        summary_path = Path(summary) if summary else path.with_name("summary.txt")
        summary_text = summary_path.read_text()
    recomputed = replay(text, summary_text)
    out.write(render_key_values("summary", recomputed))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(load_config(args.config, _flags(args)))
        if args.command == "compare":
            flags = _flags(args)
            return cmd_compare(load_config(args.config_a, flags), load_config(args.config_b, flags))
        return cmd_replay(args.transcript, args.summary, check=not args.no_check)
    except (ConfigError, FormatError, ReplayMismatch, OSError) as exc:
        print(f"erasure-qkd: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
