"""Update rules of the intelligent floor-field automaton.

One step, applied to every pedestrian against the same time-t snapshot:

1. weight each of the four neighbours by ``A * exp(k_s*S + k_d*D + k_i*[same direction])``
   and normalise;
2. stay if every weight is zero, otherwise draw a target;
3. if the target is occupied, redraw among the free neighbours plus staying,
   where staying keeps the blocked target's share;
4. for cells claimed by several pedestrians, deny everyone with probability
   ``mu_tilde`` (scaled by ``S/S_max`` when ``k_s != 0``), else let one win;
5. move the winners, leaving one unit of trace on each vacated cell,
   absorb pedestrians standing on exits, then decay/diffuse the trace.

All randomness comes from :mod:`iffca.rng`, keyed by pedestrian id (the
draws in steps 1-3) or by target cell (step 4), so results do not depend on
roster order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numba import njit

from . import rng as crng
from .fields import StaticField, build_static_field, decay_diffuse_kernel
from .params import ConflictRule, Params
from .perception import DC, DR, ray_term
from .scenario import EXIT, OBSTACLE, Direction, Grid, Scenario, place_pedestrians

STAY = 4
TIE_TOL = 1e-12
_RULE_CODE = {ConflictRule.MAX_PROBABILITY: 0, ConflictRule.PROPORTIONAL: 1}
_PLACEMENT_STREAM = 0x504C


# ------------------------------------------------------------------ kernels


@njit(cache=True)
def _weights(kind, S, D, runs, owner, row, col, last, r, k_s, k_d, k_i, p):
    """Fill ``p`` with normalised move probabilities; return ``(scaled_norm, log_scale)``.

    The true normalisation constant is ``scaled_norm * exp(log_scale)``.
    """
    h, w = kind.shape
    amp = np.zeros(4)
    expo = np.zeros(4)
    best = -np.inf
    for d in range(4):
        nr = row + DR[d]
        nc = col + DC[d]
        if nr < 0 or nr >= h or nc < 0 or nc >= w or kind[nr, nc] == OBSTACLE:
            continue
        a, _ = ray_term(owner, runs, nr, nc, d, r)
        if a <= 0.0:
            continue
        e = k_s * S[nr, nc] + k_d * D[nr, nc]
        if d == last:
            e += k_i
        amp[d] = a
        expo[d] = e
        if e > best:
            best = e
    norm = 0.0
    for d in range(4):
        p[d] = amp[d] * math.exp(expo[d] - best) if amp[d] > 0.0 else 0.0
        norm += p[d]
    if norm > 0.0:
        for d in range(4):
            p[d] /= norm
    else:
        best = 0.0
    return norm, best


@njit(cache=True)
def _pick(p, u):
    """Inverse-CDF draw over N, E, S, W; -1 if all probabilities are zero."""
    acc = 0.0
    chosen = -1
    for d in range(4):
        if p[d] > 0.0:
            acc += p[d]
            chosen = d
            if u < acc:
                return d
    return chosen


@njit(cache=True)
def _resample(owner, row, col, p, chosen, u):
    """Patience redraw: ``(direction, selection_probability)``.

    A free target passes through. For an occupied one, candidates are the free
    neighbours with ``p > 0`` (N, E, S, W order) followed by staying, which
    inherits the blocked target's probability.
    """
    if owner[row + DR[chosen], col + DC[chosen]] < 0:
        return chosen, p[chosen]
    z = p[chosen]
    n_free = 0
    for d in range(4):
        if d != chosen and p[d] > 0.0 and owner[row + DR[d], col + DC[d]] < 0:
            z += p[d]
            n_free += 1
    if n_free == 0:
        return STAY, 1.0
    x = u * z
    acc = 0.0
    for d in range(4):
        if d != chosen and p[d] > 0.0 and owner[row + DR[d], col + DC[d]] < 0:
            acc += p[d]
            if x < acc:
                return d, p[d] / z
    return STAY, p[chosen] / z


@njit(cache=True)
def _resolve_group(sel, mu_t, u_deny, u_pick, rule):
    """Winner index among contenders sorted by id, or -1 if all are denied."""
    if u_deny < mu_t:
        return -1
    m = sel.shape[0]
    if rule == 0:
        # probabilities equal up to rounding count as a tie
        floor = sel.max() - TIE_TOL
        ties = 0
        for i in range(m):
            if sel[i] >= floor:
                ties += 1
        k = min(int(u_pick * ties), ties - 1)
        for i in range(m):
            if sel[i] >= floor:
                if k == 0:
                    return i
                k -= 1
        return m - 1
    total = sel.sum()
    x = u_pick * total
    acc = 0.0
    for i in range(m):
        acc += sel[i]
        if x < acc:
            return i
    return m - 1


@njit(cache=True)
def _propose_resolve(kind, S, s_max, D, runs, owner, ids, rows, cols, last, active,
                     r, k_s, k_d, k_i, mu, rule, key, step, intent, head, count):
    """Decide and resolve for all active pedestrians; returns final directions (4 = stay).

    ``intent`` receives each pedestrian's decision after the patience
    redraw, before conflicts are resolved. ``head``/``count`` are zeroed
    scratch arrays of size H*W and are left zeroed.
    """
    n = ids.shape[0]
    w = kind.shape[1]
    prop = np.full(n, STAY, np.int64)
    sel = np.zeros(n)
    tgt = np.full(n, -1, np.int64)
    nxt = np.full(n, -1, np.int64)
    touched = np.full(n, -1, np.int64)
    p = np.zeros(4)
    for k in range(n):
        intent[k] = STAY
        if not active[k]:
            continue
        norm, _ = _weights(kind, S, D, runs, owner, rows[k], cols[k], last[k], r, k_s, k_d, k_i, p)
        if norm <= 0.0:
            continue
        pid = ids[k]
        chosen = _pick(p, crng.uniform(key, crng.DECIDE, step, pid, 0))
        d, s = _resample(owner, rows[k], cols[k], p, chosen, crng.uniform(key, crng.DECIDE, step, pid, 1))
        intent[k] = d
        if d == STAY:
            continue
        prop[k] = d
        sel[k] = s
        t = (rows[k] + DR[d]) * w + cols[k] + DC[d]
        tgt[k] = t
        touched[k] = t
        if count[t] > 0:
            nxt[k] = head[t]
        head[t] = k
        count[t] += 1

    for k in range(n):
        t = tgt[k]
        if t < 0 or count[t] <= 1:
            continue
        m = count[t]
        members = np.empty(m, np.int64)
        j = head[t]
        i = 0
        while j >= 0:
            members[i] = j
            i += 1
            j = nxt[j]
        members = members[np.argsort(ids[members], kind="mergesort")]
        if k_s != 0.0 and s_max > 0.0:
            mu_t = S[t // w, t % w] / s_max * mu
        else:
            mu_t = mu
        win = _resolve_group(sel[members], mu_t,
                             crng.uniform(key, crng.CONFLICT, step, t, 0),
                             crng.uniform(key, crng.CONFLICT, step, t, 1), rule)
        for i in range(m):
            if i != win:
                prop[members[i]] = STAY
                tgt[members[i]] = -1
        count[t] = 1

    for k in range(n):
        if touched[k] >= 0:
            count[touched[k]] = 0
            head[touched[k]] = 0
    return prop


@njit(cache=True)
def _step_kernel(kind, passable, S, s_max, runs, owner, D, ids, rows, cols, last, active,
                 exit_time, r, k_s, k_d, k_i, mu, delta, alpha, rule, key, step,
                 dir_counts, intent_counts, visits, head, count):
    """Advance one step in place; returns the number of pedestrians still inside."""
    n = ids.shape[0]
    intent = np.empty(n, np.int64)
    prop = _propose_resolve(kind, S, s_max, D, runs, owner, ids, rows, cols, last, active,
                            r, k_s, k_d, k_i, mu, rule, key, step, intent, head, count)
    remaining = 0
    for k in range(n):
        if not active[k]:
            continue
        intent_counts[intent[k]] += 1
        d = prop[k]
        dir_counts[d] += 1
        last[k] = d
        if d == STAY:
            if kind[rows[k], cols[k]] == EXIT:
                active[k] = False
                owner[rows[k], cols[k]] = -1
                exit_time[k] = step + 1
            else:
                remaining += 1
            continue
        r0 = rows[k]
        c0 = cols[k]
        r1 = r0 + DR[d]
        c1 = c0 + DC[d]
        owner[r0, c0] = -1
        owner[r1, c1] = k
        D[r0, c0] += 1
        rows[k] = r1
        cols[k] = c1
        visits[r1, c1] += 1
        if kind[r1, c1] == EXIT:
            active[k] = False
            owner[r1, c1] = -1
            exit_time[k] = step + 1
        else:
            remaining += 1
    if delta > 0.0 or alpha > 0.0:
        D[:, :] = decay_diffuse_kernel(D, passable, delta, alpha, key, step)
    return remaining


@njit(cache=True)
def _run_kernel(kind, passable, S, s_max, runs, owner, D, ids, rows, cols, last, active,
                exit_time, r, k_s, k_d, k_i, mu, delta, alpha, rule, key, step0, max_steps,
                dir_log, intent_log, visits, head, count):
    remaining = 0
    for k in range(ids.shape[0]):
        if active[k]:
            remaining += 1
    step = step0
    while remaining > 0 and step < max_steps:
        remaining = _step_kernel(kind, passable, S, s_max, runs, owner, D, ids, rows, cols,
                                 last, active, exit_time, r, k_s, k_d, k_i, mu, delta, alpha,
                                 rule, key, step, dir_log[step], intent_log[step], visits,
                                 head, count)
        step += 1
    return step


@njit(cache=True)
def _sample_kernel(kind, S, s_max, D, runs, owner, ids, rows, cols, last, active,
                   r, k_s, k_d, k_i, mu, rule, key, first, dest, head, count):
    """Decisions and conflicts from one frozen snapshot, repeated ``dest.shape[0]`` times.

    Sample ``j`` uses counter step ``first + j``; ``dest[j, k]`` is the
    linear cell index pedestrian ``k`` would occupy after the move.
    """
    n = ids.shape[0]
    w = kind.shape[1]
    intent = np.empty(n, np.int64)
    for j in range(dest.shape[0]):
        prop = _propose_resolve(kind, S, s_max, D, runs, owner, ids, rows, cols, last, active,
                                r, k_s, k_d, k_i, mu, rule, key, first + j, intent, head, count)
        for k in range(n):
            d = prop[k]
            dest[j, k] = (rows[k] + DR[d]) * w + cols[k] + DC[d] if d != STAY else rows[k] * w + cols[k]


# ------------------------------------------------------------- state types


@dataclass
class SimState:
    """Mutable state of one run.

    Per-pedestrian arrays are aligned with the roster ``ids``; ``owner``
    maps each cell to the roster index standing on it (-1 if empty).
    ``last`` is the previous realised direction (4 = stayed or no history).
    """

    grid: Grid
    owner: np.ndarray
    ids: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    last: np.ndarray
    active: np.ndarray
    exit_time: np.ndarray
    D: np.ndarray
    step: int = 0

    @classmethod
    def initial(cls, grid: Grid, cells, last=None, D=None) -> SimState:
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        n = len(cells)
        owner = np.full(grid.shape, -1, dtype=np.int64)
        for k, (r, c) in enumerate(cells):
            if grid.kind[r, c] == OBSTACLE or owner[r, c] >= 0:
                raise ValueError(f"cannot place pedestrian {k} at ({r}, {c})")
            owner[r, c] = k
        last = np.full(n, STAY, np.int64) if last is None else np.array(
            [STAY if v is None else int(v) for v in last], dtype=np.int64)
        return cls(
            grid=grid, owner=owner, ids=np.arange(n, dtype=np.int64),
            rows=cells[:, 0].copy(), cols=cells[:, 1].copy(), last=last,
            active=np.ones(n, dtype=np.bool_), exit_time=np.full(n, -1, np.int64),
            D=np.zeros(grid.shape, np.int64) if D is None else np.array(D, dtype=np.int64),
        )

    def copy(self) -> SimState:
        return replace(self, owner=self.owner.copy(), ids=self.ids.copy(), rows=self.rows.copy(),
                       cols=self.cols.copy(), last=self.last.copy(), active=self.active.copy(),
                       exit_time=self.exit_time.copy(), D=self.D.copy())

    def permuted(self, order) -> SimState:
        """Same state with the roster listed in a different order."""
        order = np.asarray(order)
        out = replace(self, ids=self.ids[order], rows=self.rows[order], cols=self.cols[order],
                      last=self.last[order], active=self.active[order],
                      exit_time=self.exit_time[order], D=self.D.copy())
        out.owner = np.full(self.grid.shape, -1, np.int64)
        for k in range(len(order)):
            if out.active[k]:
                out.owner[out.rows[k], out.cols[k]] = k
        return out

    @property
    def occupancy(self) -> np.ndarray:
        return (self.owner >= 0).astype(np.int8)

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def index_of(self, pid: int) -> int:
        hits = np.flatnonzero(self.ids == pid)
        if len(hits) == 0:
            raise KeyError(f"no pedestrian with id {pid}")
        return int(hits[0])

    def pedestrians(self) -> list[tuple[int, tuple[int, int], Direction | None]]:
        """Active roster as ``(id, cell, last_move)``."""
        return [(int(self.ids[k]), (int(self.rows[k]), int(self.cols[k])),
                 None if self.last[k] == STAY else Direction(int(self.last[k])))
                for k in range(len(self.ids)) if self.active[k]]

    def positions(self) -> dict[int, tuple[int, int]]:
        return {int(self.ids[k]): (int(self.rows[k]), int(self.cols[k]))
                for k in range(len(self.ids)) if self.active[k]}

    @property
    def evacuated(self) -> list[tuple[int, int]]:
        done = [(int(self.ids[k]), int(self.exit_time[k]))
                for k in range(len(self.ids)) if not self.active[k]]
        return sorted(done, key=lambda x: (x[1], x[0]))


@dataclass(frozen=True)
class ProbVector:
    """Move probabilities over N, E, S, W and the normalisation constant."""

    p: tuple[float, float, float, float]
    norm: float

    def __getitem__(self, d) -> float:
        return self.p[int(d)]


@dataclass(frozen=True)
class Proposal:
    pid: int
    origin: tuple[int, int]
    direction: Direction
    selection_probability: float = 1.0

    @property
    def target(self) -> tuple[int, int]:
        dr, dc = self.direction.offset
        return self.origin[0] + dr, self.origin[1] + dc


@dataclass
class RunResult:
    """Outcome of one seeded run.

    ``direction_log[t]`` counts realised outcomes (N, E, S, W, C) at step
    ``t``; ``intent_log`` counts decisions after the patience redraw. ``visits`` counts
    initial placements plus every cell entry.
    """

    seed: int
    exit_times: np.ndarray
    steps: int
    censored: bool
    direction_log: np.ndarray
    intent_log: np.ndarray
    visits: np.ndarray
    final_trace: np.ndarray = field(repr=False)

    @property
    def t_total(self) -> int | None:
        if self.censored:
            return None
        return int(self.exit_times.max()) if len(self.exit_times) else 0

    @property
    def n_pedestrians(self) -> int:
        return len(self.exit_times)


# ---------------------------------------------------------------- public ops


def _key(seed) -> np.uint64:
    return seed if isinstance(seed, np.uint64) else crng.derive_key(int(seed))


def _field_arrays(sfield: StaticField):
    return sfield.values(), float(sfield.S_max)


def transition_probabilities(pid: int, state: SimState, sfield: StaticField,
                             params: Params) -> ProbVector:
    k = state.index_of(pid)
    p = np.zeros(4)
    scaled, log_scale = _weights(state.grid.kind, sfield.values(), state.D, state.grid.run_lengths,
                                 state.owner, state.rows[k], state.cols[k], state.last[k],
                                 params.r, params.k_s, params.k_d, params.k_i, p)
    if not np.isfinite(p).all():
        raise ValueError("non-finite transition probabilities; check k_s, k_d, k_i")
    try:
        norm = scaled * math.exp(log_scale)
    except OverflowError:
        norm = math.inf
    return ProbVector(tuple(float(x) for x in p), float(norm))


def select_target(pv: ProbVector, rng: np.random.Generator) -> Direction:
    """First draw of a target; ``Direction.C`` when nothing is drawable."""
    if pv.norm == 0.0:
        return Direction.C
    d = _pick(np.array(pv.p), rng.random())
    return Direction.C if d < 0 else Direction(int(d))


def resample_if_occupied(cell: tuple[int, int], chosen: Direction, pv: ProbVector,
                         occ: np.ndarray, rng: np.random.Generator) -> tuple[Direction, float]:
    """Patience redraw for a pedestrian at ``cell`` whose target may be taken.

    Returns the final proposal and the probability it was drawn with.
    """
    owner = np.asarray(occ, dtype=np.int64) - 1
    d, s = _resample(owner, cell[0], cell[1], np.array(pv.p), int(chosen), rng.random())
    return Direction(int(d)), float(s)


def friction(cell: tuple[int, int], sfield: StaticField, params: Params) -> float:
    """Denial probability for a contested ``cell``."""
    if params.k_s != 0 and sfield.S_max > 0:
        return float(sfield.S[cell] / sfield.S_max * params.mu)
    return params.mu


def resolve_conflicts(proposals: list[Proposal], sfield: StaticField, params: Params,
                      rng: np.random.Generator) -> dict[int, Direction]:
    """Final direction per pedestrian id after friction and winner selection.

    Contested cells are visited in row-major order, each consuming two
    uniforms (denial, then winner).
    """
    final = {pr.pid: pr.direction for pr in proposals}
    groups: dict[tuple[int, int], list[Proposal]] = {}
    for pr in proposals:
        if pr.direction != Direction.C:
            groups.setdefault(pr.target, []).append(pr)
    rule = _RULE_CODE[params.conflict_rule]
    for cell in sorted(groups):
        group = sorted(groups[cell], key=lambda pr: pr.pid)
        if len(group) == 1:
            continue
        u_deny, u_pick = rng.random(), rng.random()
        sel = np.array([pr.selection_probability for pr in group])
        win = _resolve_group(sel, friction(cell, sfield, params), u_deny, u_pick, rule)
        for i, pr in enumerate(group):
            if i != win:
                final[pr.pid] = Direction.C
    return final


class _Kernel:
    """Argument bundle shared by the kernels for one (grid, field, params)."""

    def __init__(self, grid: Grid, sfield: StaticField, params: Params):
        self.kind = grid.kind
        self.passable = grid.passable
        self.S, self.s_max = _field_arrays(sfield)
        self.runs = grid.run_lengths
        self.params = params
        self.rule = _RULE_CODE[params.conflict_rule]
        self.head = np.zeros(grid.kind.size, np.int64)
        self.count = np.zeros(grid.kind.size, np.int64)

    def step(self, state: SimState, key, dir_counts, intent_counts, visits) -> int:
        p = self.params
        return _step_kernel(self.kind, self.passable, self.S, self.s_max, self.runs, state.owner,
                            state.D, state.ids, state.rows, state.cols, state.last, state.active,
                            state.exit_time, p.r, p.k_s, p.k_d, p.k_i, p.mu, p.delta, p.alpha,
                            self.rule, key, state.step, dir_counts, intent_counts, visits,
                            self.head, self.count)


def step(state: SimState, sfield: StaticField, params: Params, seed) -> SimState:
    """Return the state after one synchronous update (``state`` is untouched)."""
    out = state.copy()
    kern = _Kernel(state.grid, sfield, params)
    kern.step(out, _key(seed), np.zeros(5, np.int64), np.zeros(5, np.int64),
              np.zeros(state.grid.shape, np.int64))
    out.step += 1
    return out


def sample_one_step(state: SimState, sfield: StaticField, params: Params, seed,
                    n_samples: int, first: int = 0) -> np.ndarray:
    """Positions after decisions and conflicts, sampled ``n_samples`` times from ``state``.

    Returns an ``(n_samples, n_roster)`` array of linear cell indices. Exit
    absorption and trace updates are not applied.
    """
    kern = _Kernel(state.grid, sfield, params)
    dest = np.empty((n_samples, len(state.ids)), np.int64)
    _sample_kernel(kern.kind, kern.S, kern.s_max, state.D, kern.runs, state.owner, state.ids,
                   state.rows, state.cols, state.last, state.active, params.r, params.k_s,
                   params.k_d, params.k_i, params.mu, kern.rule, _key(seed), first, dest,
                   kern.head, kern.count)
    return dest


def initial_state(scenario: Scenario, seed: int) -> SimState:
    rng = np.random.default_rng([int(seed), _PLACEMENT_STREAM])
    return SimState.initial(scenario.grid, place_pedestrians(scenario, rng))


def run(scenario: Scenario, seed: int, sfield: StaticField | None = None,
        on_step: Callable[[SimState], None] | None = None) -> RunResult:
    """Simulate until everyone has left or ``max_steps`` is reached.

    ``on_step`` (if given) is called with the initial state and after every
    step; the trajectory is identical with or without it.
    """
    grid = scenario.grid
    params = scenario.params
    sfield = sfield or build_static_field(grid)
    state = initial_state(scenario, seed)
    key = _key(seed)
    kern = _Kernel(grid, sfield, params)
    max_steps = scenario.max_steps
    dir_log = np.zeros((max_steps, 5), np.int64)
    intent_log = np.zeros((max_steps, 5), np.int64)
    visits = np.zeros(grid.shape, np.int64)
    np.add.at(visits, (state.rows, state.cols), 1)

    if on_step is None:
        p = params
        steps = _run_kernel(kern.kind, kern.passable, kern.S, kern.s_max, kern.runs, state.owner,
                            state.D, state.ids, state.rows, state.cols, state.last, state.active,
                            state.exit_time, p.r, p.k_s, p.k_d, p.k_i, p.mu, p.delta, p.alpha,
                            kern.rule, key, 0, max_steps, dir_log, intent_log, visits,
                            kern.head, kern.count)
        state.step = int(steps)
    else:
        on_step(state)
        remaining = state.n_active
        while remaining > 0 and state.step < max_steps:
            remaining = kern.step(state, key, dir_log[state.step], intent_log[state.step], visits)
            state.step += 1
            on_step(state)

    steps = state.step
    return RunResult(
        seed=int(seed),
        exit_times=state.exit_time.copy(),
        steps=steps,
        censored=bool(state.active.any()),
        direction_log=dir_log[:steps].copy(),
        intent_log=intent_log[:steps].copy(),
        visits=visits,
        final_trace=state.D.copy(),
    )
