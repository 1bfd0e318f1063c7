"""Shared fixtures: random small configurations and a goodness-of-fit check."""

from __future__ import annotations

from collections import Counter

import numpy as np
from scipy import stats

from iffca.engine import SimState, sample_one_step
from iffca.fields import FieldError, build_static_field
from iffca.params import ConflictRule, Params
from iffca.scenario import EXIT, FREE, OBSTACLE, Grid


def random_kind(rng: np.random.Generator, max_side: int = 5) -> np.ndarray:
    """Small grid with scattered walls and one or two boundary exits, all cells reachable."""
    while True:
        h, w = rng.integers(2, max_side + 1, size=2)
        kind = np.where(rng.random((h, w)) < 0.2, OBSTACLE, FREE).astype(np.int8)
        ring = [(i, j) for i in range(h) for j in range(w) if i in (0, h - 1) or j in (0, w - 1)]
        for k in rng.choice(len(ring), size=min(len(ring), rng.integers(1, 3)), replace=False):
            kind[ring[k]] = EXIT
        try:
            build_static_field(Grid(kind))
        except FieldError:
            continue
        if (kind == FREE).sum() >= 1:
            return kind


def random_config(rng: np.random.Generator, r_max: int = 5, max_peds: int = 3, r=None):
    """``(kind, cells, last, D, params)`` with every model term switched on at random."""
    kind = random_kind(rng)
    free = np.argwhere(kind == FREE)
    n = int(rng.integers(1, min(max_peds, len(free)) + 1))
    cells = free[rng.choice(len(free), size=n, replace=False)]
    last = [None if rng.random() < 0.3 else int(rng.integers(4)) for _ in range(n)]
    D = np.where(kind != OBSTACLE, rng.integers(0, 4, kind.shape), 0)
    params = Params(
        r=int(r if r is not None else rng.integers(1, r_max + 1)),
        k_s=float(rng.choice([0.0, rng.uniform(0.2, 3.0)], p=[0.2, 0.8])),
        k_d=float(rng.uniform(0, 1.5)),
        k_i=float(rng.uniform(0, 2.0)),
        mu=float(rng.choice([0.0, rng.uniform(0.1, 1.0)], p=[0.3, 0.7])),
        conflict_rule=ConflictRule.MAX_PROBABILITY if rng.random() < 0.6 else ConflictRule.PROPORTIONAL,
    )
    return kind, [tuple(map(int, c)) for c in cells], last, D, params


def oracle_params(params: Params) -> dict:
    return {"r": params.r, "k_s": params.k_s, "k_d": params.k_d, "k_i": params.k_i,
            "mu": params.mu, "rule": "max" if params.conflict_rule == ConflictRule.MAX_PROBABILITY
            else "proportional"}


def engine_samples(kind, cells, last, D, params, n_samples: int, seed: int) -> Counter:
    grid = Grid(np.asarray(kind))
    state = SimState.initial(grid, cells, last=last, D=D)
    dest = sample_one_step(state, build_static_field(grid), params, seed, n_samples)
    return Counter(map(tuple, dest.tolist()))


def chi_square_p(observed: Counter, expected: dict, n: int, min_expected: float = 5.0) -> float:
    """p-value of observed outcome counts against exact probabilities.

    Outcomes the model says are impossible give p = 0. Bins with fewer than
    ``min_expected`` expected hits are pooled.
    """
    support = {k for k, v in expected.items() if v > 0}
    if any(k not in support for k in observed):
        return 0.0
    obs, exp = [], []
    pool_o, pool_e = 0, 0.0
    for k in sorted(support):
        e = expected[k] * n
        if e < min_expected:
            pool_o += observed.get(k, 0)
            pool_e += e
        else:
            obs.append(observed.get(k, 0))
            exp.append(e)
    if pool_e > 0:
        if pool_e < min_expected and exp:
            i = int(np.argmin(exp))
            obs[i] += pool_o
            exp[i] += pool_e
        else:
            obs.append(pool_o)
            exp.append(pool_e)
    if len(exp) < 2:
        return 1.0 if sum(obs) == n else 0.0
    exp = np.array(exp)
    exp *= n / exp.sum()
    return float(stats.chisquare(obs, exp).pvalue)


# ------------------------------------------------------------ fuzzing


def random_scenario(rng: np.random.Generator, max_steps: int = 40):
    """Small walled room with random obstacles, exits, crowd size and parameters."""
    from iffca.scenario import RandomPlacement, Scenario

    while True:
        h, w = (int(x) for x in rng.integers(3, 10, size=2))
        kind = np.zeros((h, w), np.int8)
        kind[0, :] = kind[-1, :] = kind[:, 0] = kind[:, -1] = OBSTACLE
        kind[1:-1, 1:-1][rng.random((h - 2, w - 2)) < 0.15] = OBSTACLE
        ring = [(i, j) for i in range(h) for j in range(w) if i in (0, h - 1) or j in (0, w - 1)]
        for k in rng.choice(len(ring), size=int(rng.integers(1, 4)), replace=False):
            kind[ring[k]] = EXIT
        grid = Grid(kind)
        try:
            build_static_field(grid)
        except FieldError:
            continue
        n_free = len(grid.free_cells)
        n = n_free if rng.random() < 0.1 else int(rng.integers(0, n_free + 1))
        params = Params(
            r=int(rng.integers(1, 10)), k_s=float(rng.uniform(0, 5)), k_d=float(rng.uniform(0, 3)),
            k_i=float(rng.uniform(0, 3)), mu=float(rng.uniform(0, 1)), delta=float(rng.uniform(0, 1)),
            alpha=float(rng.uniform(0, 1)), conflict_rule=ConflictRule.MAX_PROBABILITY
            if rng.random() < 0.5 else ConflictRule.PROPORTIONAL,
        )
        return Scenario(grid, RandomPlacement(n), params, max_steps)


def check_run_invariants(scenario, seed: int) -> int:
    """Run one simulation, asserting the state invariants after every step.

    Returns the number of pedestrian-steps whose probabilities were checked.
    """
    from iffca.engine import run, transition_probabilities
    from iffca.perception import movement_term

    grid = scenario.grid
    sfield = build_static_field(grid)
    params = scenario.params
    checked = [0]
    n_total = [None]

    def inspect(st):
        n = len(st.ids)
        if n_total[0] is None:
            n_total[0] = n
        assert n == n_total[0]
        assert st.n_active + len(st.evacuated) == n, "pedestrians lost or duplicated"
        act = np.flatnonzero(st.active)
        cells = list(zip(st.rows[act].tolist(), st.cols[act].tolist()))
        assert len(set(cells)) == len(cells), "two pedestrians share a cell"
        assert (st.owner >= 0).sum() == len(act)
        for k, cell in zip(act, cells):
            assert st.owner[cell] == k
            assert grid.kind[cell] != OBSTACLE
        assert st.D.dtype == np.int64 and (st.D >= 0).all()
        assert (st.D[~grid.passable] == 0).all()
        occ = st.occupancy
        for k, cell in zip(act, cells):
            pv = transition_probabilities(int(st.ids[k]), st, sfield, params)
            if pv.norm > 0:
                assert abs(sum(pv.p) - 1.0) < 1e-12
            else:
                assert pv.p == (0.0, 0.0, 0.0, 0.0)
            for d in range(4):
                dr, dc = ((-1, 0), (0, 1), (1, 0), (0, -1))[d]
                target = (cell[0] + dr, cell[1] + dc)
                if grid.in_bounds(target):
                    term = movement_term(grid, occ, target, d, params.r)
                    assert 0.0 <= term.A <= 1.0 and 0 <= term.r_star <= params.r
            checked[0] += 1

    result = run(scenario, seed, sfield, on_step=inspect)
    again = run(scenario, seed, sfield)
    for name in RESULT_ARRAYS:
        assert np.array_equal(getattr(result, name), getattr(again, name)), f"rerun differs in {name}"
    assert result.steps == again.steps and result.censored == again.censored
    m = int(result.direction_log.sum())
    assert m == sum(int(((result.exit_times < 0) | (result.exit_times > t)).sum())
                    for t in range(result.steps))
    return checked[0]


RESULT_ARRAYS = ("exit_times", "direction_log", "intent_log", "visits", "final_trace")


def same_results(a, b) -> bool:
    """Bit-for-bit equality of two lists of run results."""
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        if (x.seed, x.steps, x.censored) != (y.seed, y.steps, y.censored):
            return False
        if not all(np.array_equal(getattr(x, n), getattr(y, n)) for n in RESULT_ARRAYS):
            return False
    return True
