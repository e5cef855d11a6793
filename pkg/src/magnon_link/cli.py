"""``magnon-link run|sweep|check --config cfg.json --out dir [--set section.key=value ...]``.

Exit codes: 0 success, 1 failure, 2 partial sweep failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .harness.config import ConfigError, parse_config
from .harness.runner import EXIT_FAIL, run_check, run_single, run_sweep

COMMANDS = {"run": ("single", run_single), "sweep": ("sweep", run_sweep), "check": ("check", run_check)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="magnon-link", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "single protocol run: timeseries.csv, summary.json, manifest.json"),
        ("sweep", "two-axis rate sweep: sweep_F.csv, sweep_N2max.csv, sweep_cells.csv"),
        ("check", "diagnostics suite: check_report.json"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="JSON config or a previous manifest.json")
        p.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-path override, e.g. system.T1=0.03")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    kind, action = COMMANDS[args.command]
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
        cfg = parse_config(text, args.overrides, kind=kind)
    except (OSError, ConfigError) as exc:
        print(f"magnon-link: config error: {exc}", file=sys.stderr)
        return EXIT_FAIL

    outcome = action(cfg, args.out)
    if args.command == "check":
        print(outcome.payload["text"])
    else:
        print(json.dumps(outcome.payload, indent=2))
    print(f"outputs in {outcome.out_dir}", file=sys.stderr)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
