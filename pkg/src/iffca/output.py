"""CSV, PGM and ASCII writers."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

import numpy as np

from .engine import SimState
from .metrics import BatchStats

FREQ_COLUMNS = ("level", "kS", "r", "f_N", "f_S", "f_W", "f_E", "f_C", "M")


def write_times_csv(path: Path, times: Iterable[int]) -> None:
    Path(path).write_text("".join(f"{t}\n" for t in times))


def freq_rows(stats: BatchStats, k_s: float, r: int) -> list[dict]:
    rows = []
    for level, f, counts in (("realized", stats.freq, stats.realized),
                             ("decision", stats.decision_freq, stats.decision)):
        rows.append({"level": level, "kS": k_s, "r": r,
                     **{f"f_{d}": f"{f[d]:.4f}" for d in "NSWEC"}, "M": int(counts.sum())})
    return rows


def write_freq_csv(path: Path, rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=FREQ_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def write_matrix_csv(path: Path, matrix: np.ndarray) -> None:
    m = np.asarray(matrix)
    fmt = "%d" if np.issubdtype(m.dtype, np.integer) else "%.6g"
    np.savetxt(path, m, fmt=fmt, delimiter=",")


def to_pgm16(matrix: np.ndarray) -> bytes:
    """Binary 16-bit PGM, values scaled so the maximum maps to 65535; nan maps to 0."""
    m = np.nan_to_num(np.asarray(matrix, dtype=np.float64), nan=0.0)
    m = np.clip(m, 0, None)
    top = m.max() if m.size else 0.0
    scaled = np.zeros(m.shape) if top <= 0 else m / top * 65535.0
    pixels = np.rint(scaled).astype(">u2")
    h, w = m.shape
    return f"P5\n{w} {h}\n65535\n".encode("ascii") + pixels.tobytes()


def write_pgm(path: Path, matrix: np.ndarray) -> None:
    Path(path).write_bytes(to_pgm16(matrix))


def ascii_frame(state: SimState) -> str:
    return f"t={state.step} inside={state.n_active}\n" + state.grid.to_ascii(state.occupancy)
