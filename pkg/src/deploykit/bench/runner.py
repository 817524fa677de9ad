"""Throughput benchmark: requester threads against the three execution configurations."""

from __future__ import annotations

import csv
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import blobstore, gil
from ..blobstore import Tensor
from ..deploy import InterpreterManager
from ..errors import ConfigError, FormatError
from .models import MODELS, NativeModel, archive_path, gen_models, load_direct

log = logging.getLogger(__name__)

CONFIGS = ("multi", "single", "native")
FIELDS = ["config", "model", "threads", "requests", "seconds", "throughput", "interp_fraction"]
DEFAULT_THREADS = (1, 2, 4, 8)


@dataclass
class BenchConfig:
    config: str
    model: str
    threads: list[int] = field(default_factory=lambda: list(DEFAULT_THREADS))
    duration: float = 3.0
    seed: int = 0
    out: str | None = None
    models_dir: str | None = None
    warmup: float = 1.0

    def __post_init__(self):
        if self.config not in CONFIGS:
            raise ConfigError(f"config must be one of {CONFIGS}, got {self.config!r}")
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        self.threads = [int(t) for t in self.threads]
        if not self.threads or min(self.threads) < 1:
            raise ConfigError(f"thread counts must be >= 1, got {self.threads}")
        if self.duration <= 0 or self.warmup < 0:
            raise ConfigError("duration must be > 0 and warmup >= 0")

    @property
    def n_interpreters(self) -> int:
        return max(self.threads) if self.config == "multi" else 1


@dataclass
class BenchRow:
    config: str
    model: str
    threads: int
    requests: int
    seconds: float
    throughput: float
    interp_fraction: float

    def as_csv(self) -> list[str]:
        return [
            self.config,
            self.model,
            str(self.threads),
            str(self.requests),
            f"{self.seconds:.6f}",
            f"{self.throughput:.3f}",
            f"{self.interp_fraction:.6f}",
        ]


class CsvSink:
    """Append rows to a CSV, writing the header once and flushing every row."""

    def __init__(self, path):
        self.path = Path(path)
        fresh = not self.path.exists() or self.path.stat().st_size == 0
        if not fresh:
            with open(self.path, newline="") as f:
                header = next(csv.reader(f), None)
            if header != FIELDS:
                raise FormatError(f"{self.path}: existing file has header {header}, expected {FIELDS}")
        self._file = open(self.path, "a", newline="")
        self._writer = csv.writer(self._file, lineterminator="\n")
        if fresh:
            self._writer.writerow(FIELDS)
            self._file.flush()

    def write(self, row: BenchRow) -> None:
        self._writer.writerow(row.as_csv())
        self._file.flush()

    def close(self) -> None:
        self._file.close()


def _same(out: Tensor, ref: Tensor) -> bool:
    if out.key == ref.key:
        return True
    return out.shape == ref.shape and np.array_equal(out.numpy(), ref.numpy())


class _Target:
    """One callable per configuration, plus the reference output every response must match."""

    def __init__(self, cfg: BenchConfig, path):
        self.manager = None
        imp, net, eg = load_direct(path)
        self.example = eg
        self.reference = imp.interp.call_value(net, [eg])
        if cfg.config == "native":
            self.fn = NativeModel.from_archive(path)
        else:
            self.manager = InterpreterManager(cfg.n_interpreters)
            self.fn = self.manager.load_package(path).load_pickle("model", "model.pkl")

    def close(self):
        if self.manager is not None:
            self.manager.shutdown()


def _measure(target: _Target, n_threads: int, warmup: float, duration: float):
    """Run ``n_threads`` requesters; count only requests that finish inside the measured window."""
    fn, x, ref = target.fn, target.example, target.reference
    start = threading.Barrier(n_threads + 1)
    counts = [0] * n_threads
    held = [0.0] * n_threads
    kernel = [0.0] * n_threads
    errors: list[BaseException] = []
    window = [0.0, 0.0]

    def requester(i):
        try:
            start.wait()
            t_begin, t_end = window
            while time.perf_counter() < t_begin:
                if not _same(fn(x), ref):
                    raise AssertionError("response differs from the reference output")
            h0, k0 = gil.thread_timing()
            n = 0
            while True:
                out = fn(x)
                if time.perf_counter() > t_end:
                    break
                if not _same(out, ref):
                    raise AssertionError("response differs from the reference output")
                n += 1
            h1, k1 = gil.thread_timing()
            counts[i], held[i], kernel[i] = n, h1 - h0, k1 - k0
        except BaseException as exc:
            errors.append(exc)

    threads = [threading.Thread(target=requester, args=(i,), name=f"requester-{i}") for i in range(n_threads)]
    for t in threads:
        t.start()
    now = time.perf_counter()
    window[:] = [now + warmup, now + warmup + duration]
    start.wait()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    busy = sum(held) + sum(kernel)
    return sum(counts), duration, (sum(held) / busy if busy else 0.0)


def ensure_models(models_dir, seed: int, model: str) -> Path:
    path = archive_path(models_dir, model)
    if not path.exists():
        log.info("generating models in %s (seed %d)", models_dir, seed)
        gen_models(models_dir, seed)
    return path


def run_bench(cfg: BenchConfig) -> list[BenchRow]:
    """One row per thread count.  Rows go to ``cfg.out`` as they finish."""
    models_dir = cfg.models_dir or os.path.join(os.path.dirname(os.path.abspath(cfg.out or ".")), "models")
    path = ensure_models(models_dir, cfg.seed, cfg.model)
    blobstore.warm_kernels()
    sink = CsvSink(cfg.out) if cfg.out else None
    target = _Target(cfg, path)
    rows = []
    try:
        for n in cfg.threads:
            requests, seconds, fraction = _measure(target, n, cfg.warmup, cfg.duration)
            row = BenchRow(cfg.config, cfg.model, n, requests, seconds, requests / seconds, fraction)
            log.info("%s/%s threads=%d: %.1f req/s, interp fraction %.3f", cfg.config, cfg.model, n, row.throughput, fraction)
            rows.append(row)
            if sink:
                sink.write(row)
    finally:
        target.close()
        if sink:
            sink.close()
    return rows


def run_interleaved(cfgs: list[BenchConfig], rounds: int = 3) -> list[BenchRow]:
    """Alternate short windows across configs and sum them, one row per (config, threads).

    Throughput on a shared machine drifts over tens of seconds; comparing
    configs measured back to back at different times picks that drift up
    as a difference between them.  Each config's total here spans the same
    stretch of wall time.
    """
    if rounds < 1:
        raise ConfigError(f"rounds must be >= 1, got {rounds}")
    blobstore.warm_kernels()
    targets = []
    try:
        for cfg in cfgs:
            models_dir = cfg.models_dir or os.path.join(os.path.dirname(os.path.abspath(cfg.out or ".")), "models")
            targets.append(_Target(cfg, ensure_models(models_dir, cfg.seed, cfg.model)))
        totals: dict[tuple[int, int], list[float]] = {}
        for _ in range(rounds):
            for i, (cfg, target) in enumerate(zip(cfgs, targets)):
                for n in cfg.threads:
                    requests, seconds, fraction = _measure(target, n, cfg.warmup, cfg.duration / rounds)
                    acc = totals.setdefault((i, n), [0, 0.0, 0.0])
                    acc[0] += requests
                    acc[1] += seconds
                    acc[2] += fraction
    finally:
        for t in targets:
            t.close()
    rows = []
    for (i, n), (requests, seconds, fraction) in totals.items():
        cfg = cfgs[i]
        rows.append(BenchRow(cfg.config, cfg.model, n, requests, seconds, requests / seconds, fraction / rounds))
    return rows
