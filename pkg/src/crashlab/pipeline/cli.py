"""``crashlab`` command line."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import ConfigError, CrashLabError
from .config import RunConfig
from .stages import STAGES, run_stage, write_manifest

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="key = value config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="run directory")
    common.add_argument("--force", action="store_true", default=argparse.SUPPRESS,
                        help="rerun stages even when their outputs are current")
    parser = argparse.ArgumentParser(prog="crashlab", parents=[common],
                                     description="Composite enclosure crash design-space pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        sub.add_parser(name, parents=[common], help=f"run the {name} stage")
    sub.add_parser("run", parents=[common], help="run every stage in order")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    opts = vars(args)
    try:
        cfg = RunConfig.load(opts.get("config"), {
            "run.seed": opts.get("seed"),
            "run.workers": opts.get("workers"),
            "run.out": str(opts["out"]) if "out" in opts else None,
        })
    except ConfigError as exc:
        print(f"crashlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg["run.out"])
    stages = STAGES if args.command == "run" else (args.command,)
    try:
        for stage in stages:
            ran = run_stage(out, cfg, stage, force=opts.get("force", False))
            print(f"{stage}: {'done' if ran else 'up to date'}")
        write_manifest(out, cfg)
    except ConfigError as exc:
        print(f"crashlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CrashLabError, OSError) as exc:
        print(f"crashlab: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
