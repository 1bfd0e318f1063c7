"""Static distance field and the dynamic trace field."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import rng as crng
from .perception import DC, DR
from .scenario import OBSTACLE, Grid


class FieldError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class StaticField:
    """Static field ``S = d_max - d`` where ``d`` is the walking distance to the nearest exit.

    Obstacles hold ``nan`` in ``S`` and ``-1`` in ``d``.
    """

    S: np.ndarray
    d: np.ndarray
    S_max: float

    def values(self) -> np.ndarray:
        """``S`` with obstacles set to 0 (for kernels)."""
        return np.nan_to_num(self.S, nan=0.0)


def build_static_field(grid: Grid) -> StaticField:
    if len(grid.exits) == 0:
        raise FieldError("grid has no exit")
    h, w = grid.shape
    kind = grid.kind
    d = np.full((h, w), -1, dtype=np.int64)
    queue = deque()
    for r, c in grid.exits:
        d[r, c] = 0
        queue.append((r, c))
    while queue:
        r, c = queue.popleft()
        nd = d[r, c] + 1
        for dr, dc in ((-1, 0), (0, 1), (1, 0), (0, -1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and d[rr, cc] < 0 and kind[rr, cc] != OBSTACLE:
                d[rr, cc] = nd
                queue.append((rr, cc))
    unreachable = (d < 0) & (kind != OBSTACLE)
    if unreachable.any():
        r, c = np.argwhere(unreachable)[0]
        raise FieldError(f"cell ({r}, {c}) cannot reach any exit")
    d_max = int(d.max())
    S = np.where(kind == OBSTACLE, np.nan, (d_max - d).astype(np.float64))
    d.setflags(write=False)
    S.setflags(write=False)
    return StaticField(S=S, d=d, S_max=float(d_max))


@njit(cache=True)
def decay_diffuse_kernel(D, passable, delta, alpha, key, step):
    """One decay/diffusion sweep, unit by unit, cells in row-major order.

    Each unit moves with probability ``alpha`` to a uniformly chosen
    neighbour (staying put if that neighbour is a wall or off the grid),
    then vanishes with probability ``delta``.
    """
    h, w = D.shape
    out = np.zeros_like(D)
    for r in range(h):
        for c in range(w):
            units = D[r, c]
            if units == 0:
                continue
            cell = r * w + c
            for u in range(units):
                tr = r
                tc = c
                if alpha > 0.0:
                    bits = crng.hash64(key, crng.FIELD, step, cell, u)
                    if float(bits >> np.uint64(11)) * crng._INV53 < alpha:
                        k = np.int64(crng.mix64(bits) & np.uint64(3))
                        nr = r + DR[k]
                        nc = c + DC[k]
                        if 0 <= nr < h and 0 <= nc < w and passable[nr, nc]:
                            tr = nr
                            tc = nc
                if delta > 0.0 and crng.uniform(key, crng.FIELD_DECAY, step, cell, u) < delta:
                    continue
                out[tr, tc] += 1
    return out


def decay_diffuse(D: np.ndarray, delta: float, alpha: float, grid: Grid,
                  rng: np.random.Generator) -> np.ndarray:
    """Return the trace after one decay/diffusion sweep; ``D`` is untouched."""
    if not (0.0 <= delta <= 1.0 and 0.0 <= alpha <= 1.0):
        raise ValueError("delta and alpha must lie in [0, 1]")
    key = np.uint64(rng.integers(0, 2**63))
    return decay_diffuse_kernel(np.asarray(D, dtype=np.int64), grid.passable, delta, alpha, key, 0)


def bump_trace(D: np.ndarray, cell: tuple[int, int], grid: Grid | None = None) -> np.ndarray:
    """Copy of ``D`` with one more unit of trace at ``cell``."""
    r, c = cell
    if not (0 <= r < D.shape[0] and 0 <= c < D.shape[1]):
        raise IndexError(f"cell {cell} is out of bounds")
    if grid is not None and grid.kind[r, c] == OBSTACLE:
        raise ValueError(f"cell {cell} is an obstacle")
    out = np.array(D, dtype=np.int64, copy=True)
    out[r, c] += 1
    return out


def empty_trace(grid: Grid) -> np.ndarray:
    return np.zeros(grid.shape, dtype=np.int64)
