"""``bench gen | run | compare | report``."""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigError
from .models import MODELS, gen_models
from .report import read_rows, report, run_checks
from .runner import CONFIGS, BenchConfig, CsvSink, run_bench, run_interleaved

log = logging.getLogger("deploykit.bench")


def _threads(text: str) -> list[int]:
    try:
        values = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad thread list {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"thread counts must be positive: {text!r}")
    return values


def _configs(text: str) -> list[str]:
    values = [c.strip() for c in text.split(",") if c.strip()]
    bad = [c for c in values if c not in CONFIGS]
    if not values or bad:
        raise argparse.ArgumentTypeError(f"configs must be drawn from {','.join(CONFIGS)}: {text!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="Multi-interpreter serving benchmark.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="write the synthetic model archives")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("run", help="measure throughput for one config and model")
    r.add_argument("--config", choices=CONFIGS, required=True)
    r.add_argument("--model", choices=MODELS, required=True)
    r.add_argument("--threads", type=_threads, default=[1, 2, 4, 8])
    r.add_argument("--duration", type=float, default=3.0, help="measured seconds per thread count")
    r.add_argument("--warmup", type=float, default=1.0)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--models", default=None, help="archive directory (generated if missing)")
    r.add_argument("--out", required=True, help="CSV file; rows are appended")
    r.add_argument("--check", action="store_true", help="exit 2 if a threshold fails")

    c = sub.add_parser("compare", help="measure several configs in alternating rounds")
    c.add_argument("--configs", type=_configs, default=list(CONFIGS), help="comma-separated, default all")
    c.add_argument("--model", choices=MODELS, required=True)
    c.add_argument("--threads", type=_threads, default=[1, 2, 4, 8])
    c.add_argument("--duration", type=float, default=6.0, help="measured seconds per config and thread count, over all rounds")
    c.add_argument("--rounds", type=int, default=3)
    c.add_argument("--warmup", type=float, default=0.3, help="warmup before every window")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--models", default=None, help="archive directory (generated if missing)")
    c.add_argument("--out", required=True, help="CSV file; rows are appended")
    c.add_argument("--check", action="store_true", help="exit 2 if a threshold fails")

    s = sub.add_parser("report", help="summarize a CSV and draw figures next to it")
    s.add_argument("csv")
    s.add_argument("--no-figures", action="store_true")
    s.add_argument("--check", action="store_true", help="exit 2 if a threshold fails")
    return p


def _print_checks(rows) -> int:
    checks = run_checks(rows)
    for c in checks:
        print(c)
    return 2 if any(not c.passed for c in checks) else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.cmd == "gen":
            for model, path in gen_models(args.out, args.seed).items():
                print(f"{model}: {path}")
            return 0
        if args.cmd == "run":
            cfg = BenchConfig(
                args.config, args.model, args.threads, args.duration, args.seed, args.out, args.models, args.warmup
            )
            rows = run_bench(cfg)
            for row in rows:
                print(",".join(row.as_csv()))
            return _print_checks(read_rows(args.out)) if args.check else 0
        if args.cmd == "compare":
            cfgs = [
                BenchConfig(c, args.model, args.threads, args.duration, args.seed, args.out, args.models, args.warmup)
                for c in args.configs
            ]
            sink = CsvSink(args.out)  # header problems surface before the measurement
            try:
                rows = run_interleaved(cfgs, args.rounds)
                for row in rows:
                    sink.write(row)
                    print(",".join(row.as_csv()))
            finally:
                sink.close()
            return _print_checks(read_rows(args.out)) if args.check else 0
        text = report(args.csv, figures=not args.no_figures)
        print(text)
        return _print_checks(read_rows(args.csv)) if args.check else 0
    except (OSError, ValueError, ConfigError, RuntimeError) as exc:
        print(f"bench: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
