import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iffca.perception import movement_term, obstacle_distance
from iffca.scenario import OBSTACLE, Direction, Grid

import oracle
from helpers import random_kind

CORRIDOR = Grid.room(3, 12, exits=[(0, 1)])  # interior row 1, columns 1..10


def test_wall_cell_has_zero_distance():
    assert obstacle_distance(CORRIDOR, (0, 5), Direction.E, 4) == 0
    assert movement_term(CORRIDOR, np.zeros(CORRIDOR.shape), (0, 5), Direction.E, 4).A == 0.0


def test_clamped_to_sight_distance():
    assert obstacle_distance(CORRIDOR, (1, 1), Direction.E, 4) == 4
    assert movement_term(CORRIDOR, np.zeros(CORRIDOR.shape), (1, 1), Direction.E, 4).A == 1.0


def test_wall_five_cells_ahead():
    assert obstacle_distance(CORRIDOR, (1, 6), Direction.E, 8) == 5


def test_formula_example():
    occ = np.zeros(CORRIDOR.shape, np.int8)
    occ[1, 7] = occ[1, 9] = 1
    term = movement_term(CORRIDOR, occ, (1, 6), Direction.E, 8)
    assert term.r_star == 5
    assert term.A == pytest.approx(1 - (2 + 8 - 5) / 8) == pytest.approx(0.375)


def test_target_itself_counts():
    occ = np.zeros(CORRIDOR.shape, np.int8)
    occ[1, 6] = 1
    assert movement_term(CORRIDOR, occ, (1, 6), Direction.E, 2).A == pytest.approx(0.5)


def test_wall_close_ahead_gives_zero():
    # one free cell before the wall with r=2: 1 - (0 + 2 - 1)/2 = 0.5; r=4 clamps at 0
    assert movement_term(CORRIDOR, np.zeros(CORRIDOR.shape), (1, 10), Direction.E, 2).A == 0.5
    assert movement_term(CORRIDOR, np.zeros(CORRIDOR.shape), (1, 10), Direction.E, 1).A == 1.0
    occ = np.zeros(CORRIDOR.shape, np.int8)
    occ[1, 10] = 1
    assert movement_term(CORRIDOR, occ, (1, 10), Direction.E, 2).A == 0.0


def test_exit_opens_onto_free_ground():
    room = Grid.room(5, 5, exits=[(2, 4)])
    term = movement_term(room, np.zeros(room.shape), (2, 3), Direction.E, 8)
    assert term == type(term)(1.0, 8)
    # an exit cell with nothing beyond it on the grid side still stops at walls
    assert obstacle_distance(room, (2, 3), Direction.N, 8) == 2


def test_rejects_bad_sight_distance():
    with pytest.raises(ValueError):
        obstacle_distance(CORRIDOR, (1, 1), Direction.E, 0)


def _random_case(seed):
    rng = np.random.default_rng(seed)
    grid = Grid(random_kind(rng, max_side=7))
    occ = ((rng.random(grid.shape) < 0.35) & grid.passable).astype(np.int8)
    cell = tuple(int(x) for x in rng.integers(0, grid.shape))
    return rng, grid, occ, cell, Direction(int(rng.integers(4))), int(rng.integers(1, 9))


def _ray_cells(grid, cell, d, r):
    dr, dc = d.offset
    return {(cell[0] + k * dr, cell[1] + k * dc) for k in range(r)}


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32))
def test_bounds_and_independent_scan(seed):
    _, grid, occ, cell, d, r = _random_case(seed)
    term = movement_term(grid, occ, cell, d, r)
    assert 0.0 <= term.A <= 1.0
    assert 0 <= term.r_star <= r
    if term.r_star == 0:
        assert term.A == 0.0
    a, r_star = oracle.ray(grid.kind.tolist(), {tuple(c) for c in np.argwhere(occ).tolist()}, cell, int(d), r)
    assert (term.A, term.r_star) == (pytest.approx(a, abs=1e-15), r_star)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32))
def test_r1_degenerates_to_occupancy(seed):
    _, grid, occ, cell, d, _ = _random_case(seed)
    expected = 0.0 if grid.kind[cell] == OBSTACLE else 1.0 - occ[cell]
    assert movement_term(grid, occ, cell, d, 1).A == expected


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32))
def test_monotone_in_pedestrians_and_walls(seed):
    rng, grid, occ, cell, d, r = _random_case(seed)
    base = movement_term(grid, occ, cell, d, r).A
    free = np.argwhere(grid.passable & (occ == 0))
    if len(free):
        more = occ.copy()
        more[tuple(free[rng.integers(len(free))])] = 1
        assert movement_term(grid, more, cell, d, r).A <= base
    # add a wall somewhere on the ray
    ray = [c for c in _ray_cells(grid, cell, d, r) if grid.in_bounds(c) and grid.kind[c] != OBSTACLE
           and 0 < c[0] < grid.height - 1 and 0 < c[1] < grid.width - 1]
    if ray:
        kind = grid.kind.copy()
        kind[ray[rng.integers(len(ray))]] = OBSTACLE
        walled = Grid(kind)
        occ2 = occ * walled.passable
        assert movement_term(walled, occ2, cell, d, r).A <= movement_term(grid, occ2, cell, d, r).A


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32))
def test_off_ray_cells_do_not_matter(seed):
    rng, grid, occ, cell, d, r = _random_case(seed)
    base = movement_term(grid, occ, cell, d, r)
    on_ray = _ray_cells(grid, cell, d, r)
    other = occ.copy()
    for c in map(tuple, np.argwhere(grid.passable)):
        if c not in on_ray:
            other[c] = rng.integers(2)
    assert movement_term(grid, other, cell, d, r) == base
