"""Command-line entry point.

Exit codes: 0 when nothing was detected, 2 when at least one alert fired
(``replay`` / ``watch``), 1 on usage or runtime errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import subprocess
import sys
from dataclasses import replace
from typing import Sequence, TextIO

from . import __version__
from .config import Config, load_config
from .detector import Alert, Monitor, evaluate_corpus
from .errors import GpuSentryError
from .simulator import KINDS, builtin_corpus, gen_trace, load_manifest, profile, write_corpus
from .sources import NvidiaSmiSource, iter_trace, write_trace

EXIT_CLEAN = 0
EXIT_ERROR = 1
EXIT_DETECTED = 2


class UsageError(Exception):
    def __init__(self, message: str, usage: str):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self.format_usage())


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gpusentry", description="Behavioral GPU cryptojacking detector.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log diagnostics to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("watch", help="monitor live GPU processes via nvidia-smi")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--interval", type=float, help="poll interval in seconds")
    p.add_argument("--window", type=int, help="window capacity in samples")
    p.add_argument("--json", action="store_true", help="emit JSON lines")
    p.add_argument("--max-polls", type=int, help=argparse.SUPPRESS)

    p = sub.add_parser("replay", help="run the detector over a recorded trace")
    p.add_argument("trace", help="JSON-Lines trace file")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--window", type=int, help="window capacity in samples")
    p.add_argument("--json", action="store_true", help="emit JSON lines")

    p = sub.add_parser("simulate", help="write synthetic traces")
    what = p.add_mutually_exclusive_group(required=True)
    what.add_argument("--profile", choices=KINDS, help="workload profile to simulate")
    what.add_argument("--builtin-corpus", action="store_true",
                      help="write the 18-trace evaluation corpus and its manifest")
    p.add_argument("--duration", type=float, help="trace length in seconds (default 300)")
    p.add_argument("--period", type=float, help="sampling interval in seconds (default 1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pid", type=int, default=4242)
    p.add_argument("-o", "--output", required=True, help="trace file, or directory for the corpus")

    p = sub.add_parser("evaluate", help="evaluate detection rates on a labeled corpus")
    p.add_argument("--corpus", required=True, help="manifest path, or 'builtin'")
    p.add_argument("--seed", type=int, default=0, help="seed for the builtin corpus")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--util-std-max", type=float, help="override the utilization deviation bound")
    p.add_argument("--json", action="store_true", help="emit the report as JSON")
    return parser


class _Emitter:
    def __init__(self, mode: str, out: TextIO):
        self.mode = mode
        self.out = out

    def alert(self, alert: Alert) -> None:
        line = alert.to_json() if self.mode == "json" else alert.format_human()
        print(line, file=self.out, flush=True)

    def summary(self, **fields) -> None:
        if self.mode == "json":
            print(json.dumps({"event": "summary", **fields}), file=self.out, flush=True)
        else:
            print(" ".join(f"{k}={v}" for k, v in fields.items()), file=self.out, flush=True)


def _config(args, **overrides) -> Config:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "json", False):
        overrides["output"] = "json"
    return cfg.with_overrides(**overrides)


def cmd_replay(args, out: TextIO) -> int:
    cfg = _config(args, window_capacity=args.window)
    monitor = Monitor(cfg.thresholds, cfg.window)
    monitor.keep_verdicts = False
    emitter = _Emitter(cfg.output, out)
    alerts = samples = 0
    for sample in iter_trace(args.trace):
        samples += 1
        alert = monitor.feed(sample)
        if alert is not None:
            alerts += 1
            emitter.alert(alert)
    emitter.summary(trace=args.trace, samples=samples, alerts=alerts)
    return EXIT_DETECTED if alerts else EXIT_CLEAN


def cmd_watch(args, out: TextIO) -> int:
    from .watch import run_watch

    cfg = _config(args, period_s=args.interval, window_capacity=args.window)
    source = NvidiaSmiSource(cfg.pmon_command, cfg.query_command)
    monitor = Monitor(cfg.thresholds, cfg.window)
    monitor.keep_verdicts = False
    emitter = _Emitter(cfg.output, out)
    alerts = 0
    try:
        alerts = run_watch(source, monitor, emitter.alert, interval=cfg.period_s,
                           max_polls=args.max_polls)
    except KeyboardInterrupt:
        pass
    emitter.summary(alerts=alerts, mem_clamped=source.diagnostics.mem_clamped)
    return EXIT_DETECTED if alerts else EXIT_CLEAN


def cmd_simulate(args, out: TextIO) -> int:
    if args.builtin_corpus:
        manifest = write_corpus(builtin_corpus(args.seed), args.output)
        print(f"wrote {manifest}", file=out)
        return EXIT_CLEAN
    overrides = {k: v for k, v in (("duration_s", args.duration), ("period_s", args.period))
                 if v is not None}
    samples = gen_trace(profile(args.profile, **overrides), args.pid, args.seed)
    write_trace(samples, args.output)
    print(f"wrote {len(samples)} samples to {args.output}", file=out)
    return EXIT_CLEAN


def cmd_evaluate(args, out: TextIO) -> int:
    cfg = _config(args)
    th = cfg.thresholds
    if args.util_std_max is not None:
        th = replace(th, util_std_max=args.util_std_max)
    if args.corpus == "builtin":
        items = builtin_corpus(args.seed).items()
    else:
        items = load_manifest(args.corpus)
    report = evaluate_corpus(items, th, cfg.window)
    if cfg.output == "json":
        print(json.dumps(report.to_dict()), file=out)
    else:
        print(report.format_table(), file=out)
    return EXIT_CLEAN


COMMANDS = {
    "watch": cmd_watch,
    "replay": cmd_replay,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
}


def dispatch(argv: Sequence[str] | None = None, out: TextIO | None = None,
             err: TextIO | None = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc.usage.rstrip(), file=err)
        print(f"gpusentry: error: {exc}", file=err)
        return EXIT_ERROR
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=err)
    try:
        return COMMANDS[args.command](args, out)
    except (GpuSentryError, OSError, subprocess.SubprocessError) as exc:
        print(f"gpusentry: error: {exc}", file=err)
        return EXIT_ERROR


def main() -> None:
    sys.exit(dispatch())
