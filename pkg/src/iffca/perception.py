"""Environment analysis: how free the line of sight is in each direction.

For a candidate target cell and direction, the pedestrian looks along a ray
of at most ``r`` cells starting at the target. Walls cut the ray short
(``r_star``); everything past a wall counts as occupied. The resulting
factor ``A`` is 1 for a clear ray and 0 when there is no room at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .scenario import EXIT, Direction, Grid

# row/col steps for N, E, S, W
DR = np.array([-1, 0, 1, 0], dtype=np.int64)
DC = np.array([0, 1, 0, -1], dtype=np.int64)

OPEN = 1 << 40  # run length through an exit onto open ground


@dataclass(frozen=True)
class PerceptionTerm:
    A: float
    r_star: int


def run_lengths(passable: np.ndarray, kind: np.ndarray | None = None) -> np.ndarray:
    """Consecutive passable cells from each cell onward, per direction.

    Result has shape ``(4, H, W)`` indexed by direction N, E, S, W; the
    count includes the cell itself and is 0 on obstacles. When ``kind`` is
    given, an exit on the grid edge looks out into open space, so a ray
    leaving the grid through it is unobstructed (counted as ``OPEN``).
    """
    p = np.asarray(passable, dtype=np.int64)
    h, w = p.shape
    edge = np.zeros((4, h, w), dtype=np.int64)
    if kind is not None:
        out_exit = (np.asarray(kind) == EXIT).astype(np.int64) * OPEN
        edge[0, 0], edge[2, h - 1] = out_exit[0], out_exit[h - 1]
        edge[1][:, w - 1], edge[3][:, 0] = out_exit[:, w - 1], out_exit[:, 0]
    out = np.zeros((4, h, w), dtype=np.int64)
    n, e, s, west = out
    n[0] = p[0] * (1 + edge[0, 0])
    for i in range(1, h):
        n[i] = p[i] * (n[i - 1] + 1)
    s[h - 1] = p[h - 1] * (1 + edge[2, h - 1])
    for i in range(h - 2, -1, -1):
        s[i] = p[i] * (s[i + 1] + 1)
    west[:, 0] = p[:, 0] * (1 + edge[3][:, 0])
    for j in range(1, w):
        west[:, j] = p[:, j] * (west[:, j - 1] + 1)
    e[:, w - 1] = p[:, w - 1] * (1 + edge[1][:, w - 1])
    for j in range(w - 2, -1, -1):
        e[:, j] = p[:, j] * (e[:, j + 1] + 1)
    out.setflags(write=False)
    return out


@njit(cache=True)
def ray_term(owner, runs, row, col, d, r):
    """``(A, r_star)`` for target ``(row, col)`` looking in direction ``d``.

    ``owner`` holds -1 on empty cells; anything else counts as a pedestrian.
    """
    r_star = runs[d, row, col]
    if r_star > r:
        r_star = r
    if r_star == 0:
        return 0.0, 0
    count = 0
    h, w = owner.shape
    rr = row
    cc = col
    for _ in range(r_star):
        if rr < 0 or rr >= h or cc < 0 or cc >= w:
            break
        if owner[rr, cc] >= 0:
            count += 1
        rr += DR[d]
        cc += DC[d]
    a = 1.0 - (count + r - r_star) / r
    if a < 0.0:
        a = 0.0
    elif a > 1.0:
        a = 1.0
    return a, r_star


def obstacle_distance(grid: Grid, cell: tuple[int, int], direction: Direction, r: int) -> int:
    """Passable cells along ``direction`` starting at ``cell``, capped at ``r``."""
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    return int(min(grid.run_lengths[int(direction), cell[0], cell[1]], r))


def movement_term(grid: Grid, occ: np.ndarray, cell: tuple[int, int],
                  direction: Direction, r: int) -> PerceptionTerm:
    """Perception factor for moving onto ``cell`` in ``direction``.

    ``occ`` is the 0/1 occupation grid; the target cell itself is the first
    cell of the ray.
    """
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    owner = np.asarray(occ, dtype=np.int64) - 1
    a, r_star = ray_term(owner, grid.run_lengths, cell[0], cell[1], int(direction), r)
    return PerceptionTerm(float(a), int(r_star))
