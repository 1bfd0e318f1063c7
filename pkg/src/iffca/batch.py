"""Seed-sweep batches, optionally fanned out over worker processes."""

from __future__ import annotations

import itertools
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Iterable, Sequence

from .engine import RunResult, run
from .fields import build_static_field
from .metrics import BatchStats
from .scenario import Scenario

log = logging.getLogger(__name__)

THREADS_ENV = "IFFCA_THREADS"


def parse_seeds(text: str) -> list[int]:
    """``"0..499"`` (inclusive) or a comma list such as ``"1,2,7"``."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split(".."))
            seeds = list(range(lo, hi + 1))
        else:
            seeds = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValueError(f"bad seed range {text!r}; expected A..B or a comma list") from None
    if not seeds:
        raise ValueError(f"seed range {text!r} is empty")
    if min(seeds) < 0:
        raise ValueError("seeds must be non-negative")
    return seeds


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be >= 1")
        return n
    return os.cpu_count() or 1


def _run_chunk(scenario: Scenario, seeds: Sequence[int]) -> list[RunResult]:
    sfield = build_static_field(scenario.grid)
    return [run(scenario, s, sfield) for s in seeds]


def run_batch(scenario: Scenario, seeds: Iterable[int], workers: int | None = None) -> list[RunResult]:
    """Run every seed; results come back in seed order whatever the worker count."""
    seeds = list(seeds)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(seeds) <= 1:
        return _run_chunk(scenario, seeds)
    size = -(-len(seeds) // (workers * 4))
    chunks = [seeds[i:i + size] for i in range(0, len(seeds), size)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, itertools.repeat(scenario), chunks))
    return [r for part in parts for r in part]


def batch_stats(scenario: Scenario, seeds: Iterable[int], workers: int | None = None) -> BatchStats:
    return BatchStats.from_runs(run_batch(scenario, seeds, workers), scenario.grid.shape)


def sweep(scenario: Scenario, grid: dict[str, list], seeds: Sequence[int],
          workers: int | None = None) -> list[tuple[dict, BatchStats]]:
    """One batch per point of the Cartesian parameter grid (same seeds everywhere)."""
    names = list(grid)
    out = []
    for values in itertools.product(*(grid[n] for n in names)):
        point = dict(zip(names, values))
        log.info("sweep point %s", point)
        scen = scenario.with_params(**point)
        out.append((point, batch_stats(scen, seeds, workers)))
    return out
