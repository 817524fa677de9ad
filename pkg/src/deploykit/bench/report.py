"""Reading benchmark CSVs back: summary tables, threshold checks and figures."""

from __future__ import annotations

import csv
import os
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from ..errors import FormatError
from .runner import CONFIGS, FIELDS, BenchRow

# large-model interpreter share above which multi-interpreter parity is not expected
LARGE_FRACTION_MAX = 0.20


def available_cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def read_rows(path) -> list[BenchRow]:
    """Parse a benchmark CSV; an empty file is an empty table."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            return []
        if header != FIELDS:
            raise FormatError(f"{path}: bad header {header}, expected {FIELDS}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(FIELDS):
                raise FormatError(f"{path}:{lineno}: expected {len(FIELDS)} fields, got {len(rec)}")
            try:
                row = BenchRow(
                    rec[0], rec[1], int(rec[2]), int(rec[3]), float(rec[4]), float(rec[5]), float(rec[6])
                )
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            rows.append(row)
    return rows


def _index(rows):
    # model -> config -> threads -> row (later rows win)
    table = defaultdict(lambda: defaultdict(dict))
    for r in rows:
        table[r.model][r.config][r.threads] = r
    return table


def _configs(by_config) -> list[str]:
    return [c for c in CONFIGS if c in by_config] + sorted(c for c in by_config if c not in CONFIGS)


def format_table(rows: list[BenchRow]) -> str:
    """Per model: throughput (req/s) by thread count for each config, then interpreter fractions."""
    if not rows:
        return "(no rows)"
    out = []
    for model, by_config in sorted(_index(rows).items()):
        configs = _configs(by_config)
        threads = sorted({t for c in configs for t in by_config[c]})
        out.append(f"model: {model}")
        out.append("  threads" + "".join(f"{c:>12s}" for c in configs) + "".join(f"{'f_' + c:>12s}" for c in configs))
        for t in threads:
            line = f"  {t:7d}"
            for c in configs:
                r = by_config[c].get(t)
                line += f"{r.throughput:12.1f}" if r else f"{'-':>12s}"
            for c in configs:
                r = by_config[c].get(t)
                line += f"{r.interp_fraction:12.3f}" if r else f"{'-':>12s}"
            out.append(line)
        out.append("")
    return "\n".join(out).rstrip()


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def __str__(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _throughput(table, model, config, threads):
    r = table.get(model, {}).get(config, {}).get(threads)
    return r.throughput if r else None


def plateau_check(rows, lo=1, hi=8, limit=1.5) -> Check | None:
    table = _index(rows)
    a, b = _throughput(table, "small", "single", lo), _throughput(table, "small", "single", hi)
    if a is None or b is None:
        return None
    ratio = b / a if a else float("inf")
    return Check("single-interpreter plateau", ratio <= limit, f"small/single {hi}:{lo} threads = {ratio:.2f} (<= {limit})")


def scaling_check(rows, cores: int | None = None) -> Check | None:
    """>= 3x at 8 threads with 8+ cores; otherwise >= 0.5*c at c threads."""
    cores = available_cores() if cores is None else cores
    if cores >= 8:
        hi, need = 8, 3.0
    else:
        hi, need = cores, 0.5 * cores
    table = _index(rows)
    a, b = _throughput(table, "small", "multi", 1), _throughput(table, "small", "multi", hi)
    if a is None or b is None:
        return None
    ratio = b / a if a else 0.0
    return Check(
        "multi-interpreter scaling", ratio >= need, f"small/multi {hi}:1 threads = {ratio:.2f} (>= {need:g}, {cores} cores)"
    )


def parity_check(rows, threads=4, tolerance=0.25) -> Check | None:
    table = _index(rows)
    values = {c: _throughput(table, "large", c, threads) for c in CONFIGS}
    if any(v is None for v in values.values()):
        return None
    lo, hi = min(values.values()), max(values.values())
    spread = lo / hi if hi else 0.0
    detail = ", ".join(f"{c}={v:.1f}" for c, v in values.items())
    return Check("large-model parity", spread >= 1 - tolerance, f"{detail}; min/max = {spread:.2f} (>= {1 - tolerance:.2f})")


def fraction_check(rows, limit=LARGE_FRACTION_MAX) -> Check | None:
    fractions = [r.interp_fraction for r in rows if r.model == "large" and r.config != "native"]
    if not fractions:
        return None
    worst = max(fractions)
    return Check("large-model interpreter fraction", worst <= limit, f"max = {worst:.3f} (<= {limit})")


def run_checks(rows, cores: int | None = None) -> list[Check]:
    checks = [plateau_check(rows), scaling_check(rows, cores), parity_check(rows), fraction_check(rows)]
    return [c for c in checks if c is not None]


def plot_figures(rows: list[BenchRow], csv_path) -> list[Path]:
    """One PNG per model next to the CSV: throughput against threads, one line per config."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    csv_path = Path(csv_path)
    written = []
    markers = {"multi": "o", "single": "s", "native": "^"}
    for model, by_config in sorted(_index(rows).items()):
        fig, ax = plt.subplots(figsize=(5.0, 3.5))
        for config in _configs(by_config):
            pts = sorted(by_config[config].items())
            ax.plot([t for t, _ in pts], [r.throughput for _, r in pts], marker=markers.get(config, "x"), label=config)
        ax.set_xlabel("requester threads")
        ax.set_ylabel("throughput (req/s)")
        ax.set_title(f"{model} model")
        ax.set_ylim(bottom=0)
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = csv_path.with_name(f"{csv_path.stem}_{model}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def report(path, figures: bool = True) -> str:
    rows = read_rows(path)
    text = format_table(rows)
    if figures and rows:
        for p in plot_figures(rows, path):
            text += f"\nfigure: {p}"
    return text
