"""Deterministic, stream-partitioned Monte Carlo driver.

Work is split over ``streams`` independent RNG streams. Stream i draws
``samples // streams + (i < samples % streams)`` samples, and per-stream
results are concatenated in stream order, so the estimate depends only on
(seed, streams, samples). The number of worker threads does not matter.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gaussian_core import RngSeed

REJECTION_FLAG_RATE = 1e-3
THREADS_ENV = "STOCHGEO_THREADS"

# kernel(seed_for_stream, count) -> (per-sample values, rejected count)
StreamKernel = Callable[[RngSeed, int], tuple[np.ndarray, int]]


@dataclass
class McEstimate:
    mean: float
    stderr: float
    samples: int
    rejected: int
    seed: int
    streams: int
    model: str = ""
    params: dict = field(default_factory=dict)
    note: str = ""

    @property
    def flagged(self) -> bool:
        """True when the rank-deficiency rejection rate reached the reporting limit."""
        return self.samples > 0 and self.rejected / self.samples >= REJECTION_FLAG_RATE

    def zscore(self, exact: float) -> float:
        diff = abs(self.mean - exact)
        if self.stderr > 0:
            return diff / self.stderr
        return 0.0 if diff == 0 else math.inf

    def to_record(self) -> dict:
        return {
            "model": self.model,
            "params": dict(self.params),
            "mean": self.mean,
            "stderr": self.stderr,
            "samples": self.samples,
            "rejected": self.rejected,
            "seed": self.seed,
            "streams": self.streams,
            "note": self.note,
        }


def thread_cap() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from exc
    if value < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


def stream_counts(samples: int, streams: int) -> list[int]:
    if streams < 1:
        raise ValueError("need at least one stream")
    if samples < 0:
        raise ValueError("sample count must be non-negative")
    base, extra = divmod(samples, streams)
    return [base + (i < extra) for i in range(streams)]


def summarize(values: np.ndarray) -> tuple[float, float]:
    """Mean and standard error (sample std with ddof=1 over sqrt(N))."""
    n = values.shape[0]
    if n == 0:
        return math.nan, math.nan
    mean = float(np.mean(values))
    if n == 1:
        return mean, math.nan
    return mean, float(np.std(values, ddof=1) / math.sqrt(n))


def run_streams(kernel: StreamKernel, samples: int, seed: int, streams: int = 1,
                threads: int | None = None) -> tuple[np.ndarray, int]:
    """Run ``kernel`` on every stream and return (values in stream order, total rejections)."""
    counts = stream_counts(samples, streams)
    jobs = [(RngSeed(seed, i), c) for i, c in enumerate(counts)]
    workers = min(streams, threads if threads is not None else thread_cap())
    if workers <= 1:
        results = [kernel(s, c) for s, c in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: kernel(*job), jobs))
    values = np.concatenate([np.asarray(v, dtype=float).reshape(-1) for v, _ in results]) if results else np.zeros(0)
    return values, sum(int(rej) for _, rej in results)


def estimate(kernel: StreamKernel, samples: int, seed: int, streams: int = 1, *, scale: float = 1.0,
             model: str = "", params: dict | None = None, note: str = "") -> McEstimate:
    """Monte Carlo mean of ``scale * kernel values``."""
    values, rejected = run_streams(kernel, samples, seed, streams)
    mean, stderr = summarize(values)
    return McEstimate(
        mean=scale * mean,
        stderr=abs(scale) * stderr,
        samples=int(values.shape[0]),
        rejected=rejected,
        seed=seed,
        streams=streams,
        model=model,
        params=dict(params or {}),
        note=note,
    )
