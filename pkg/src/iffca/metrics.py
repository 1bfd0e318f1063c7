"""Batch observables: evacuation-time modes, direction frequencies, track heatmaps."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .engine import RunResult

DIRECTION_NAMES = ("N", "E", "S", "W", "C")
LEVELS = ("realized", "decision")


def mode_of_times(times: Iterable[int]) -> int:
    """Most frequent value; ties go to the smallest time."""
    counts = Counter(int(t) for t in times)
    if not counts:
        raise ValueError("no uncensored runs to take a mode over")
    top = max(counts.values())
    return min(t for t, c in counts.items() if c == top)


def _counts(runs: Iterable[RunResult], level: str) -> np.ndarray:
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}, got {level!r}")
    total = np.zeros(5, np.int64)
    for r in runs:
        log = r.direction_log if level == "realized" else r.intent_log
        total += log.sum(axis=0)
    return total


def _freq(counts: np.ndarray) -> dict[str, float]:
    m = counts.sum()
    if m == 0:
        return {k: 0.0 for k in DIRECTION_NAMES}
    return {k: float(c / m) for k, c in zip(DIRECTION_NAMES, counts)}


def direction_frequencies(runs: Iterable[RunResult], level: str = "realized") -> tuple[dict[str, float], int]:
    """Frequencies of N, E, S, W, C per pedestrian-step and the total count ``M``.

    ``realized`` counts what actually happened (any stay is C). ``decision``
    counts each pedestrian's choice after the patience redraw, so losing a
    conflict does not turn a chosen move into C.
    """
    counts = _counts(runs, level)
    return _freq(counts), int(counts.sum())


def track_heatmap(runs: Iterable[RunResult], shape: tuple[int, int] | None = None) -> np.ndarray:
    """Initial placements plus cell entries, summed over runs."""
    total = None if shape is None else np.zeros(shape, np.int64)
    for r in runs:
        total = r.visits.astype(np.int64).copy() if total is None else total + r.visits
    if total is None:
        raise ValueError("shape is required for an empty batch")
    return total


@dataclass
class BatchStats:
    """Aggregates over a batch of runs. ``merge`` is associative and commutative."""

    shape: tuple[int, int]
    histogram: Counter = field(default_factory=Counter)
    realized: np.ndarray = field(default_factory=lambda: np.zeros(5, np.int64))
    decision: np.ndarray = field(default_factory=lambda: np.zeros(5, np.int64))
    heatmap: np.ndarray | None = None
    censored_count: int = 0
    n_runs: int = 0

    def __post_init__(self) -> None:
        if self.heatmap is None:
            self.heatmap = np.zeros(self.shape, np.int64)

    @classmethod
    def from_runs(cls, runs: Iterable[RunResult], shape: tuple[int, int]) -> BatchStats:
        stats = cls(shape)
        for r in runs:
            stats.add(r)
        return stats

    def add(self, run: RunResult) -> None:
        if run.censored:
            self.censored_count += 1
        else:
            self.histogram[run.t_total] += 1
        self.realized = self.realized + run.direction_log.sum(axis=0)
        self.decision = self.decision + run.intent_log.sum(axis=0)
        self.heatmap = self.heatmap + run.visits
        self.n_runs += 1

    def merge(self, other: BatchStats) -> BatchStats:
        if self.shape != other.shape:
            raise ValueError("cannot merge batches over different grids")
        return BatchStats(self.shape, self.histogram + other.histogram,
                          self.realized + other.realized, self.decision + other.decision,
                          self.heatmap + other.heatmap,
                          self.censored_count + other.censored_count, self.n_runs + other.n_runs)

    @property
    def times(self) -> list[int]:
        return sorted(self.histogram.elements())

    @property
    def t_mo(self) -> int:
        return mode_of_times(self.histogram.elements())

    @property
    def mean_time(self) -> float | None:
        n = sum(self.histogram.values())
        return sum(t * c for t, c in self.histogram.items()) / n if n else None

    @property
    def M(self) -> int:
        return int(self.realized.sum())

    @property
    def freq(self) -> dict[str, float]:
        return _freq(self.realized)

    @property
    def decision_freq(self) -> dict[str, float]:
        return _freq(self.decision)

    def summary(self) -> dict:
        return {
            "runs": self.n_runs,
            "T_mo": self.t_mo if self.histogram else None,
            "T_mean": self.mean_time,
            "censored": self.censored_count,
            "M": self.M,
            "freq": self.freq,
            "decision_freq": self.decision_freq,
        }
