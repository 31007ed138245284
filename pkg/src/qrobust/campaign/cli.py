"""Command-line entry point: ``qrobust <command> [options]``.

Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 the budget ran out
before ``L`` distinct controllers were found (whatever was found is still
written).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .._version import __version__
from ..errors import ValidationError
from .config import CampaignConfig, config_hash, load_config
from .report import (
    FORMATS,
    load_result,
    read_controllers,
    write_controllers,
    write_provenance,
    write_report,
    write_trajectory,
)
from .runner import analyze, search

log = logging.getLogger("qrobust")

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2
EXIT_PARTIAL = 3

_ANALYSIS_TABLES = {
    "rim": ("rim_grid",),
    "arim": ("arim_curve",),
    "tau": ("tau",),
    "yield": ("yield",),
}


def _u64(text):
    value = int(text)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qrobust",
        description="Robustness statistics and controller search for XX spin-chain transfer.",
    )
    parser.add_argument("--version", action="version", version=f"qrobust {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="campaign YAML file (defaults apply if omitted)")
    common.add_argument("--seed", type=_u64, help="override the config seed")
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("--threads", type=_positive, default=1, help="worker threads (default 1)")
    common.add_argument("--checkpoint-every", type=_positive, metavar="CALLS",
                        help="trajectory checkpoint interval in objective calls")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    sub.add_parser("optimize", parents=[common],
                   help="run the multi-start search and write controllers.json")
    sub.add_parser("campaign", parents=[common],
                   help="search, then write every table and the summary")
    for name, help_text in (
        ("rim", "RIM grid for a controller set"),
        ("arim", "ARIM curve with bootstrap intervals"),
        ("tau", "rank consistency against the base noise level"),
        ("yield", "per-controller yields and worst-case fidelities"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--controllers", type=Path,
                       help="controllers JSON (default: <out>/controllers.json)")

    rep = sub.add_parser("report", help="re-emit a stored result in another format")
    rep.add_argument("--in", dest="source", type=Path, required=True,
                     help="result directory or result.json")
    rep.add_argument("--out", type=Path, required=True, help="output directory")
    rep.add_argument("--format", choices=FORMATS, default="csv")
    rep.add_argument("-v", "--verbose", action="store_true")
    return parser


def _config(args) -> CampaignConfig:
    cfg = load_config(args.config) if args.config else CampaignConfig.from_dict({})
    return cfg.with_overrides(seed=args.seed, checkpoint_every=args.checkpoint_every)


def _provenance(out: Path, started, args):
    write_provenance(
        out / "provenance.json",
        started=started,
        finished=_dt.datetime.now(_dt.timezone.utc).isoformat(),
        command=args.command,
        threads=getattr(args, "threads", 1),
        qrobust=__version__,
        python=platform.python_version(),
        numpy=np.__version__,
    )


def _cmd_optimize(args, cfg, started):
    records = search(cfg, args.threads)
    args.out.mkdir(parents=True, exist_ok=True)
    write_controllers(records, cfg.chain, args.out / "controllers.json", config_hash(cfg))
    write_trajectory(records, args.out / "trajectory.csv")
    _provenance(args.out, started, args)
    print(f"{len(records)} controllers written to {args.out / 'controllers.json'}")
    if records:
        print(f"best objective {records[0].objective:.6g}")
    return EXIT_PARTIAL if len(records) < cfg.L else EXIT_OK


def _cmd_campaign(args, cfg, started):
    records = search(cfg, args.threads)
    if not records:
        raise ValidationError("search produced no controller; raise the budget")
    result = analyze(cfg, records, args.threads)
    write_report(result, args.out, "csv")
    _provenance(args.out, started, args)
    print(f"campaign written to {args.out}: {len(records)} controllers, "
          f"mean ARIM {result.arim_mean:.6g}")
    return EXIT_PARTIAL if result.partial else EXIT_OK


def _cmd_analysis(args, cfg, started):
    path = args.controllers or args.out / "controllers.json"
    records, spec = read_controllers(path)
    if args.config and spec != cfg.chain:
        raise ValidationError(f"{path}: controllers are for {spec}, config describes {cfg.chain}")
    cfg = replace(cfg, chain=spec)
    result = analyze(cfg, records, args.threads)
    written = write_report(result, args.out, "csv", tables=_ANALYSIS_TABLES[args.command])
    for p in written:
        print(p)
    return EXIT_OK


def _cmd_report(args):
    result = load_result(args.source)
    for p in write_report(result, args.out, args.format):
        print(p)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    try:
        if args.command == "report":
            return _cmd_report(args)
        cfg = _config(args)
        if args.command == "optimize":
            return _cmd_optimize(args, cfg, started)
        if args.command == "campaign":
            return _cmd_campaign(args, cfg, started)
        return _cmd_analysis(args, cfg, started)
    except ValidationError as exc:
        print(f"qrobust: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"qrobust: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
