"""Continuous 2D point-mass maze environments parsed from ASCII layouts.

Positions live in a frame where cell (ix, iy) covers the square
[ix*cell_size, (ix+1)*cell_size) x [iy*cell_size, (iy+1)*cell_size); text row 0
maps to iy = 0. Dynamics are deterministic: the action is a displacement,
clipped per component to +/- ACTION_MAX, and motion stops at the first wall
face hit (no sliding), backed off by a small margin so positions stay strictly
inside free cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError

ACTION_MAX = 1.0
WALL_MARGIN = 1e-6

WALL_CHAR = "#"
FREE_CHARS = {".", "S", "G"}


@dataclass
class MazeSpec:
    width: int
    height: int
    walls: np.ndarray  # bool, shape (height, width), indexed [iy][ix]
    start_region: frozenset
    goal_region: frozenset
    cell_size: float = 1.0

    def __post_init__(self):
        self.walls = np.asarray(self.walls, dtype=bool)
        if self.walls.shape != (self.height, self.width):
            raise ParseError("wall grid shape does not match width/height")
        free = ~self.walls
        if not free.any():
            raise ParseError("maze has no free cell")
        border = np.concatenate(
            [self.walls[0, :], self.walls[-1, :], self.walls[:, 0], self.walls[:, -1]]
        )
        if not border.all():
            raise ParseError("maze border must be entirely walls")
        for name, region in (("start", self.start_region), ("goal", self.goal_region)):
            if not region:
                raise ParseError(f"{name} region is empty")
            for ix, iy in region:
                if self.walls[iy, ix]:
                    raise ParseError(f"{name} region contains wall cell ({ix}, {iy})")

    @property
    def free_cells(self):
        ys, xs = np.nonzero(~self.walls)
        return [(int(x), int(y)) for x, y in zip(xs, ys)]

    def is_free(self, ix: int, iy: int) -> bool:
        if ix < 0 or iy < 0 or ix >= self.width or iy >= self.height:
            return False
        return not self.walls[iy, ix]

    def cell_of(self, position) -> tuple:
        return (
            int(position[0] // self.cell_size),
            int(position[1] // self.cell_size),
        )

    def contains(self, position) -> bool:
        return self.is_free(*self.cell_of(position))


@dataclass
class EnvState:
    position: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)


@dataclass
class Goal:
    position: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)


@dataclass
class StepResult:
    next_state: EnvState
    collided: bool


def parse_maze(text: str, cell_size: float = 1.0) -> MazeSpec:
    """Parse an ASCII grid ('#' wall, '.' free, 'S' start, 'G' goal).

    If no 'S' ('G') appears, the start (goal) region defaults to all free
    cells. Raises ParseError on ragged rows, unknown characters, or layouts
    violating the maze invariants.
    """
    rows = text.splitlines()
    while rows and rows[-1] == "":
        rows.pop()
    if not rows:
        raise ParseError("empty maze text")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ParseError("ragged rows: all lines must have equal length")
    height = len(rows)
    walls = np.zeros((height, width), dtype=bool)
    start, goal = set(), set()
    for iy, row in enumerate(rows):
        for ix, ch in enumerate(row):
            if ch == WALL_CHAR:
                walls[iy, ix] = True
            elif ch in FREE_CHARS:
                if ch == "S":
                    start.add((ix, iy))
                elif ch == "G":
                    goal.add((ix, iy))
            else:
                raise ParseError(f"unknown character {ch!r} at row {iy}, column {ix}")
    free = {(int(x), int(y)) for y, x in zip(*np.nonzero(~walls))}
    if not free:
        raise ParseError("maze has no free cell")
    return MazeSpec(
        width=width,
        height=height,
        walls=walls,
        start_region=frozenset(start or free),
        goal_region=frozenset(goal or free),
        cell_size=cell_size,
    )


def _sample_in_cells(cells, cell_size, rng):
    ix, iy = cells[rng.integers(len(cells))]
    offset = rng.random(2)
    return (np.array([ix, iy], dtype=np.float64) + offset) * cell_size


def reset(spec: MazeSpec, rng: np.random.Generator):
    """Sample (initial state, goal) uniformly over their regions' continuous extent."""
    start_cells = sorted(spec.start_region)
    goal_cells = sorted(spec.goal_region)
    state = EnvState(_sample_in_cells(start_cells, spec.cell_size, rng))
    goal = Goal(_sample_in_cells(goal_cells, spec.cell_size, rng))
    return state, goal


def step(spec: MazeSpec, state: EnvState, action) -> StepResult:
    """Apply a displacement action with stop-at-wall collision resolution."""
    a = np.clip(np.asarray(action, dtype=np.float64), -ACTION_MAX, ACTION_MAX)
    p = state.position
    if a[0] == 0.0 and a[1] == 0.0:
        return StepResult(EnvState(p.copy()), False)

    cs = spec.cell_size
    ix, iy = spec.cell_of(p)
    sx = 1 if a[0] > 0 else -1
    sy = 1 if a[1] > 0 else -1
    # Parametric grid traversal over t in [0, 1]; t_max_* is the t of the next
    # cell-boundary crossing on each axis.
    if a[0] != 0.0:
        bx = (ix + (sx > 0)) * cs
        t_max_x = (bx - p[0]) / a[0]
        t_delta_x = cs / abs(a[0])
    else:
        t_max_x, t_delta_x = math.inf, math.inf
    if a[1] != 0.0:
        by = (iy + (sy > 0)) * cs
        t_max_y = (by - p[1]) / a[1]
        t_delta_y = cs / abs(a[1])
    else:
        t_max_y, t_delta_y = math.inf, math.inf

    while True:
        t_hit = min(t_max_x, t_max_y)
        if t_hit > 1.0:
            return StepResult(EnvState(p + a), False)
        cross_x = t_max_x <= t_max_y
        cross_y = t_max_y <= t_max_x
        nx = ix + sx if cross_x else ix
        ny = iy + sy if cross_y else iy
        blocked = not spec.is_free(nx, ny)
        if cross_x and cross_y and not blocked:
            # Exact corner crossing: also forbid cutting between two walls.
            blocked = not (spec.is_free(ix + sx, iy) and spec.is_free(ix, iy + sy))
        if blocked:
            stop = p + t_hit * a
            if cross_x:
                stop[0] = (ix + (sx > 0)) * cs - sx * WALL_MARGIN
            if cross_y:
                stop[1] = (iy + (sy > 0)) * cs - sy * WALL_MARGIN
            return StepResult(EnvState(stop), True)
        if cross_x:
            ix = nx
            t_max_x += t_delta_x
        if cross_y:
            iy = ny
            t_max_y += t_delta_y


def goal_distance(a, b) -> float:
    """Euclidean distance between two points (or position-carrying objects)."""
    pa = a.position if hasattr(a, "position") else np.asarray(a, dtype=np.float64)
    pb = b.position if hasattr(b, "position") else np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(pa - pb))


FOUR_ROOMS = """\
###########
#....#....#
#.........#
#....#....#
#....#....#
##.#####.##
#....#....#
#....#....#
#.........#
#....#....#
###########
"""

MAZE_5X5 = """\
#######
#.#...#
#.#.#.#
#.#.#.#
#.#.#.#
#...#.#
#######
"""

MAZE_11X11 = """\
#############
#...........#
#.####.####.#
#.#.......#.#
#.#.#####.#.#
#.#.#...#.#.#
#.#.#...#.#.#
#.#.#...#.#.#
#.#.##.##.#.#
#.#.......#.#
#.#########.#
#...........#
#############
"""

LAYOUTS = {
    "four_rooms": FOUR_ROOMS,
    "maze_5x5": MAZE_5X5,
    "maze_11x11": MAZE_11X11,
}

# 50-step horizons for the small layouts, 100 for the large ring maze.
DEFAULT_EPISODE_STEPS = {
    "four_rooms": 50,
    "maze_5x5": 50,
    "maze_11x11": 100,
}


def make_maze(name: str, cell_size: float = 1.0) -> MazeSpec:
    if name not in LAYOUTS:
        raise ParseError(f"unknown maze layout {name!r}; choose from {sorted(LAYOUTS)}")
    return parse_maze(LAYOUTS[name], cell_size=cell_size)
