"""Run reports: timing summaries, resource sampling and config digests."""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import psutil

from .errors import BenchError

REPORT_SCHEMA_VERSION = 1
MIN_SAMPLES_FOR_MEAN = 30
MIN_BENCH_EVENTS = 1000
SAMPLE_INTERVAL = 0.05  # 20 Hz


def summarize_ms(samples: Iterable[float]) -> dict:
    """Mean and p95 of a timing series; the mean is withheld below 30 samples."""
    arr = np.asarray(list(samples), dtype=float)
    n = int(arr.size)
    return {
        "n": n,
        "mean": float(arr.mean()) if n >= MIN_SAMPLES_FOR_MEAN else None,
        "p95": float(np.percentile(arr, 95)) if n else None,
    }


class ResourceSampler:
    """Polls this process's RSS and CPU share on a background thread."""

    def __init__(self, interval: float = SAMPLE_INTERVAL):
        self.interval = interval
        self.proc = psutil.Process(os.getpid())
        self.rss: list[int] = []
        self.cpu: list[float] = []
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self.started = self.stopped = 0.0

    def _loop(self):
        while not self._stop.is_set():
            self.rss.append(self.proc.memory_info().rss)
            self.cpu.append(self.proc.cpu_percent(None))
            self._stop.wait(self.interval)

    def __enter__(self):
        self.proc.cpu_percent(None)  # prime the counter
        self.started = time.monotonic()
        self._thread = threading.Thread(target=self._loop, name="resource-sampler", daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._stop.set()
        self._thread.join()
        self.stopped = time.monotonic()
        self.rss.append(self.proc.memory_info().rss)
        return False

    @property
    def rate_hz(self) -> float:
        span = self.stopped - self.started
        return len(self.cpu) / span if span > 0 else 0.0

    def summary(self) -> dict:
        # the first cpu sample only primes psutil's counter
        cpu = self.cpu[1:] if len(self.cpu) > 1 else self.cpu
        return {
            "peak_memory_mb": max(self.rss) / 2 ** 20 if self.rss else None,
            "mean_cpu_percent": float(np.mean(cpu)) if cpu else None,
            "samples": len(self.cpu),
            "sample_rate_hz": self.rate_hz,
        }


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_digest(settings: dict, inputs: Iterable = ()) -> str:
    """sha256 over the command settings and the contents of its input files."""
    doc = {"settings": settings,
           "inputs": {str(p): file_digest(p) for p in sorted(str(p) for p in inputs if p is not None)
                      if Path(p).is_file()}}
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()


def base_report(command: str, digest: str) -> dict:
    return {"schema_version": REPORT_SCHEMA_VERSION, "command": command, "config_digest": digest}


def require_events(n: int, minimum: int = MIN_BENCH_EVENTS) -> None:
    if n < minimum:
        raise BenchError("INSUFFICIENT_EVENTS", f"bench needs at least {minimum} events, trace has {n}",
                         events=n)


def load_report_schema() -> dict:
    return json.loads((Path(__file__).parent / "schemas" / "run_report.schema.json").read_text())
