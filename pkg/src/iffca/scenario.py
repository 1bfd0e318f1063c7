"""Room geometry, scenario files and initial placement.

Coordinates are ``(row, col)`` with the origin at the top-left cell. The
outermost ring of the grid is wall, except where exits are cut into it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Union

import numpy as np

from .params import Params

FREE = 0
OBSTACLE = 1
EXIT = 2

CELL_SIZE_M = 0.4
STEP_DURATION_S = 0.3
DEFAULT_MAX_STEPS = 10_000


class Direction(IntEnum):
    N = 0
    E = 1
    S = 2
    W = 3
    C = 4  # stay

    @property
    def offset(self) -> tuple[int, int]:
        return OFFSETS[self]


OFFSETS = ((-1, 0), (0, 1), (1, 0), (0, -1), (0, 0))
MOVES = (Direction.N, Direction.E, Direction.S, Direction.W)


class ScenarioError(ValueError):
    """Invalid scenario content; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ScenarioSyntaxError(ScenarioError):
    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__("syntax", f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True, eq=False)
class Grid:
    """Cell classification of a room; immutable."""

    kind: np.ndarray

    cell_size = CELL_SIZE_M
    step_duration = STEP_DURATION_S

    def __post_init__(self) -> None:
        kind = np.array(self.kind, dtype=np.int8)
        if kind.ndim != 2 or kind.shape[0] < 1 or kind.shape[1] < 1:
            raise ScenarioError("grid", f"need a non-empty 2-D array, got shape {kind.shape}")
        if not np.isin(kind, (FREE, OBSTACLE, EXIT)).all():
            raise ScenarioError("grid", "cell kinds must be FREE, OBSTACLE or EXIT")
        interior = kind[1:-1, 1:-1]
        if (interior == EXIT).any():
            r, c = np.argwhere(interior == EXIT)[0] + 1
            raise ScenarioError("exits", f"exit ({r}, {c}) is not on the boundary ring")
        kind.setflags(write=False)
        object.__setattr__(self, "kind", kind)

    @property
    def height(self) -> int:
        return self.kind.shape[0]

    @property
    def width(self) -> int:
        return self.kind.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.kind.shape

    def in_bounds(self, cell: tuple[int, int]) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    @cached_property
    def passable(self) -> np.ndarray:
        out = self.kind != OBSTACLE
        out.setflags(write=False)
        return out

    @cached_property
    def free_cells(self) -> np.ndarray:
        """``(k, 2)`` array of Free cells in row-major order."""
        return np.argwhere(self.kind == FREE)

    @cached_property
    def exits(self) -> np.ndarray:
        return np.argwhere(self.kind == EXIT)

    @cached_property
    def run_lengths(self) -> np.ndarray:
        from .perception import run_lengths

        return run_lengths(self.passable, self.kind)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Grid) and np.array_equal(self.kind, other.kind)

    def __hash__(self) -> int:
        return hash((self.kind.shape, self.kind.tobytes()))

    @classmethod
    def room(cls, height: int, width: int, exits=(), obstacles=()) -> Grid:
        """Walled room: boundary ring is wall except the listed exit cells."""
        kind = np.zeros((height, width), dtype=np.int8)
        kind[0, :] = kind[-1, :] = kind[:, 0] = kind[:, -1] = OBSTACLE
        for r, c in obstacles:
            kind[r, c] = OBSTACLE
        for r, c in exits:
            kind[r, c] = EXIT
        return cls(kind)

    @classmethod
    def from_ascii(cls, text: str) -> Grid:
        return _parse_ascii(text).grid

    def to_ascii(self, occupied=None) -> str:
        chars = np.array([".", "#", "E"])[self.kind]
        if occupied is not None:
            chars = np.where(np.asarray(occupied) > 0, "P", chars)
        return "\n".join("".join(row) for row in chars)


@dataclass(frozen=True)
class RandomPlacement:
    """``count`` pedestrians on uniformly drawn Free cells.

    If ``seed`` is set the placement is fixed across runs; otherwise it is
    drawn from each run's own seed.
    """

    count: int
    seed: int | None = None


Placement = Union[tuple[tuple[int, int], ...], RandomPlacement]


@dataclass(frozen=True)
class Scenario:
    grid: Grid
    placement: Placement
    params: Params = field(default_factory=Params)
    max_steps: int = DEFAULT_MAX_STEPS
    description: str = ""

    def __post_init__(self) -> None:
        _validate(self)

    @property
    def n_pedestrians(self) -> int:
        if isinstance(self.placement, RandomPlacement):
            return self.placement.count
        return len(self.placement)

    @property
    def density(self) -> float:
        return self.n_pedestrians / len(self.grid.free_cells)

    def with_params(self, **changes) -> Scenario:
        return Scenario(self.grid, self.placement, self.params.replace(**changes),
                        self.max_steps, self.description)


def _validate(s: Scenario) -> None:
    grid = s.grid
    if len(grid.exits) == 0:
        raise ScenarioError("exits", "at least one exit is required")
    if isinstance(s.placement, RandomPlacement):
        n, n_free = s.placement.count, len(grid.free_cells)
        if isinstance(n, bool) or not isinstance(n, int) or n < 0:
            raise ScenarioError("pedestrians.random", f"must be a non-negative integer, got {n!r}")
        if n > n_free:
            raise ScenarioError("pedestrians.random", f"{n} pedestrians exceed {n_free} free cells")
    else:
        seen = set()
        for i, cell in enumerate(s.placement):
            if not grid.in_bounds(cell):
                raise ScenarioError(f"pedestrians[{i}]", f"{list(cell)} is out of bounds")
            if grid.kind[cell] != FREE:
                what = "an exit" if grid.kind[cell] == EXIT else "an obstacle"
                raise ScenarioError(f"pedestrians[{i}]", f"{list(cell)} is {what}")
            if cell in seen:
                raise ScenarioError(f"pedestrians[{i}]", f"{list(cell)} is already occupied")
            seen.add(cell)
    if isinstance(s.max_steps, bool) or not isinstance(s.max_steps, int) or s.max_steps < 1:
        raise ScenarioError("max_steps", f"must be a positive integer, got {s.max_steps!r}")


# ---------------------------------------------------------------- parsing


def parse_scenario(text: str) -> Scenario:
    """Parse a JSON scenario or a bare ASCII map.

    ASCII maps use ``#`` obstacle, ``E`` exit, ``P`` pedestrian, ``.`` free,
    and take default parameters.
    """
    if not text.strip():
        raise ScenarioSyntaxError("empty scenario")
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ScenarioSyntaxError(e.msg, e.lineno, e.colno) from None
        return _from_dict(data)
    return _parse_ascii(text)


def _parse_ascii(text, params=None, max_steps=DEFAULT_MAX_STEPS, description="") -> Scenario:
    lines = [ln.rstrip() for ln in text.strip("\n").splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ScenarioSyntaxError("empty map")
    width = max(len(ln) for ln in lines)
    kind = np.full((len(lines), width), FREE, dtype=np.int8)
    peds = []
    for r, ln in enumerate(lines):
        if len(ln) != width:
            raise ScenarioSyntaxError(f"map row has {len(ln)} cells, expected {width}", r + 1, len(ln) + 1)
        for c, ch in enumerate(ln):
            if ch == "#":
                kind[r, c] = OBSTACLE
            elif ch == "E":
                kind[r, c] = EXIT
            elif ch == "P":
                peds.append((r, c))
            elif ch != ".":
                raise ScenarioSyntaxError(f"unexpected map character {ch!r}", r + 1, c + 1)
    _wall_ring(kind)
    return Scenario(Grid(kind), tuple(peds), params or Params(), max_steps, description)


def _wall_ring(kind: np.ndarray) -> None:
    ring = np.zeros(kind.shape, dtype=bool)
    ring[0, :] = ring[-1, :] = ring[:, 0] = ring[:, -1] = True
    kind[ring & (kind != EXIT)] = OBSTACLE


def _cell(value, name: str) -> tuple[int, int]:
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)):
        raise ScenarioError(name, f"expected [row, col] integers, got {value!r}")
    return int(value[0]), int(value[1])


def _int(data: dict, key: str, default=None) -> int:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(key, f"expected an integer, got {value!r}")
    return value


_KNOWN = {"width", "height", "obstacles", "exits", "pedestrians", "params",
          "max_steps", "description", "map"}


def _from_dict(data) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioSyntaxError("top level must be a JSON object")
    unknown = set(data) - _KNOWN
    if unknown:
        raise ScenarioError(sorted(unknown)[0], "unknown field")
    try:
        params = Params.from_dict(data.get("params", {}))
    except (TypeError, ValueError) as e:
        raise ScenarioError("params", str(e)) from None
    max_steps = _int(data, "max_steps", DEFAULT_MAX_STEPS)
    description = str(data.get("description", ""))

    if "map" in data:
        rows = data["map"]
        if isinstance(rows, list):
            rows = "\n".join(rows)
        scen = _parse_ascii(rows, params, max_steps, description)
        if "pedestrians" in data:
            placement = _placement(data["pedestrians"])
            scen = Scenario(scen.grid, placement, params, max_steps, description)
        return scen

    for key in ("width", "height"):
        if key not in data:
            raise ScenarioError(key, "missing")
    width, height = _int(data, "width"), _int(data, "height")
    if width < 1 or height < 1:
        raise ScenarioError("width" if width < 1 else "height", "must be >= 1")
    kind = np.zeros((height, width), dtype=np.int8)
    _wall_ring(kind)
    for i, v in enumerate(data.get("obstacles", [])):
        cell = _cell(v, f"obstacles[{i}]")
        if not (0 <= cell[0] < height and 0 <= cell[1] < width):
            raise ScenarioError(f"obstacles[{i}]", f"{list(cell)} is out of bounds")
        kind[cell] = OBSTACLE
    for i, v in enumerate(data.get("exits", [])):
        cell = _cell(v, f"exits[{i}]")
        r, c = cell
        if not (0 <= r < height and 0 <= c < width):
            raise ScenarioError(f"exits[{i}]", f"{list(cell)} is out of bounds")
        if 0 < r < height - 1 and 0 < c < width - 1:
            raise ScenarioError(f"exits[{i}]", f"{list(cell)} is not on the boundary ring")
        kind[cell] = EXIT
    placement = _placement(data.get("pedestrians", []))
    return Scenario(Grid(kind), placement, params, max_steps, description)


def _placement(value) -> Placement:
    if isinstance(value, dict):
        if set(value) - {"random", "seed"} or "random" not in value:
            raise ScenarioError("pedestrians", 'expected {"random": N} with optional "seed"')
        seed = value.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
            raise ScenarioError("pedestrians.seed", f"expected a non-negative integer, got {seed!r}")
        return RandomPlacement(value["random"], seed)
    if not isinstance(value, list):
        raise ScenarioError("pedestrians", "expected a list of cells or {\"random\": N}")
    return tuple(_cell(v, f"pedestrians[{i}]") for i, v in enumerate(value))


def scenario_to_dict(s: Scenario) -> dict:
    kind = s.grid.kind
    ring = np.zeros(kind.shape, dtype=bool)
    ring[0, :] = ring[-1, :] = ring[:, 0] = ring[:, -1] = True
    if isinstance(s.placement, RandomPlacement):
        peds = {"random": s.placement.count}
        if s.placement.seed is not None:
            peds["seed"] = s.placement.seed
    else:
        peds = [list(c) for c in s.placement]
    return {
        "description": s.description,
        "width": s.grid.width,
        "height": s.grid.height,
        "obstacles": np.argwhere((kind == OBSTACLE) & ~ring).tolist(),
        "exits": s.grid.exits.tolist(),
        "pedestrians": peds,
        "params": s.params.to_dict(),
        "max_steps": s.max_steps,
    }


def serialize_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=1)


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario file; bare names resolve to the bundled scenarios."""
    p = Path(path)
    if not p.exists():
        bundled = resources.files("iffca") / "scenarios" / (p.name if p.suffix else p.name + ".json")
        if bundled.is_file():
            return parse_scenario(bundled.read_text())
        raise FileNotFoundError(f"scenario file not found: {path}")
    return parse_scenario(p.read_text())


def bundled_scenarios() -> list[str]:
    root = resources.files("iffca") / "scenarios"
    return sorted(f.name[:-5] for f in root.iterdir() if f.name.endswith(".json"))


# -------------------------------------------------------------- placement


def place_pedestrians(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    """Initial cells, one ``(row, col)`` row per pedestrian id.

    Explicit placements are returned verbatim. Random placements draw
    without replacement from the Free cells; a placement with its own seed
    ignores ``rng``.
    """
    p = scenario.placement
    if not isinstance(p, RandomPlacement):
        return np.array(p, dtype=np.int64).reshape(-1, 2)
    if p.seed is not None:
        rng = np.random.default_rng(p.seed)
    free = scenario.grid.free_cells
    idx = rng.choice(len(free), size=p.count, replace=False)
    return free[idx].astype(np.int64)


def occupancy(grid: Grid, cells: np.ndarray) -> np.ndarray:
    f = np.zeros(grid.shape, dtype=np.int8)
    if len(cells):
        f[cells[:, 0], cells[:, 1]] = 1
    return f
