"""Grid mazes built from uniform square blocks.

Layout text format (one character per cell, one row per line):
    '#' wall, '.' free, 'S' start cell, 'G' goal cell.
The boundary must be fully walled. Cell (row r, col c) spans the world
rectangle [c*cell_size, (c+1)*cell_size] x [r*cell_size, (r+1)*cell_size].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

WALL, FREE, START, GOAL = "#", ".", "S", "G"

C_MAZE = """\
#######
#SS...#
#####.#
#G....#
#######"""

SPIRAL = """\
#######
#S....#
#####.#
#..G#.#
#.###.#
#.....#
#######"""

GATHER = """\
########
#......#
#......#
#..S...#
#......#
#......#
#......#
########"""

OPEN_FIELD = """\
###############
#.............#
#.............#
#.............#
#.............#
#.............#
#.............#
#......S......#
#.............#
#.............#
#.............#
#.............#
#.............#
#.............#
###############"""

N_FOOD = 8
N_BOMBS = 8


@dataclass
class MazeSpec:
    grid: tuple[str, ...]
    cell_size: float = 4.0
    kind: str = "custom"
    walls: np.ndarray = field(init=False, repr=False)
    start_cells: tuple[tuple[int, int], ...] = field(init=False)
    goal_cell: tuple[int, int] | None = field(init=False)

    def __post_init__(self):
        rows = len(self.grid)
        if rows < 3 or any(len(r) != len(self.grid[0]) for r in self.grid):
            raise ValueError("maze grid must be rectangular with at least 3 rows")
        cols = len(self.grid[0])
        bad = set("".join(self.grid)) - {WALL, FREE, START, GOAL}
        if bad:
            raise ValueError(f"unknown maze characters: {sorted(bad)}")
        walls = np.zeros((rows, cols), dtype=bool)
        starts, goals = [], []
        for r, line in enumerate(self.grid):
            for c, ch in enumerate(line):
                if ch == WALL:
                    walls[r, c] = True
                elif ch == START:
                    starts.append((r, c))
                elif ch == GOAL:
                    goals.append((r, c))
        if not (walls[0].all() and walls[-1].all() and walls[:, 0].all() and walls[:, -1].all()):
            raise ValueError("maze boundary must be fully walled")
        if not starts:
            raise ValueError("maze needs at least one start cell")
        if n_connected_regions(starts) != 1:
            raise ValueError("start cells must form exactly one connected region")
        if len(goals) > 1:
            raise ValueError("at most one goal cell is supported")
        if self.kind in ("c_maze", "mirrored", "spiral") and len(goals) != 1:
            raise ValueError(f"{self.kind} requires exactly one goal cell")
        if self.kind in ("gather", "open_field") and goals:
            raise ValueError(f"{self.kind} must not contain a goal cell")
        self.walls = walls
        self.start_cells = tuple(starts)
        self.goal_cell = goals[0] if goals else None

    @property
    def n_rows(self) -> int:
        return self.walls.shape[0]

    @property
    def n_cols(self) -> int:
        return self.walls.shape[1]

    def cell_center(self, cell: tuple[int, int]) -> np.ndarray:
        r, c = cell
        return np.array([(c + 0.5) * self.cell_size, (r + 0.5) * self.cell_size])

    @property
    def goal_center(self) -> np.ndarray | None:
        return None if self.goal_cell is None else self.cell_center(self.goal_cell)

    def cell_of(self, position: np.ndarray) -> tuple[int, int]:
        c = int(np.floor(position[0] / self.cell_size))
        r = int(np.floor(position[1] / self.cell_size))
        return r, c

    def is_wall_cell(self, r: int, c: int) -> bool:
        if r < 0 or c < 0 or r >= self.n_rows or c >= self.n_cols:
            return True
        return bool(self.walls[r, c])

    def free_cells(self) -> list[tuple[int, int]]:
        rs, cs = np.nonzero(~self.walls)
        return list(zip(rs.tolist(), cs.tolist()))


def n_connected_regions(cells: list[tuple[int, int]]) -> int:
    remaining = set(cells)
    regions = 0
    while remaining:
        regions += 1
        stack = [remaining.pop()]
        while stack:
            r, c = stack.pop()
            for nb in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
                if nb in remaining:
                    remaining.remove(nb)
                    stack.append(nb)
    return regions


def parse_maze_text(text: str, cell_size: float = 4.0, kind: str = "custom") -> MazeSpec:
    rows = tuple(line for line in text.strip().splitlines())
    return MazeSpec(rows, cell_size=cell_size, kind=kind)


def load_maze_file(path: str, cell_size: float = 4.0) -> MazeSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_maze_text(fh.read(), cell_size=cell_size)


def mirror_rows(grid: tuple[str, ...]) -> tuple[str, ...]:
    return tuple(row[::-1] for row in grid)


def build_maze(kind: str, cell_size: float = 4.0) -> MazeSpec:
    """Deterministic layout per kind; 'mirrored' is the left-right
    reflection of c_maze."""
    if kind == "c_maze":
        return parse_maze_text(C_MAZE, cell_size, kind)
    if kind == "mirrored":
        rows = mirror_rows(tuple(C_MAZE.splitlines()))
        return MazeSpec(rows, cell_size=cell_size, kind="mirrored")
    if kind == "spiral":
        return parse_maze_text(SPIRAL, cell_size, kind)
    if kind == "gather":
        return parse_maze_text(GATHER, cell_size, kind)
    if kind == "open_field":
        return parse_maze_text(OPEN_FIELD, cell_size, kind)
    raise ValueError(f"unknown maze kind {kind!r}")


def sample_gather_sites(maze: MazeSpec, rng: np.random.Generator):
    """Food and bomb cell centers for one episode, drawn without
    replacement from the free cells (start cell excluded)."""
    candidates = [c for c in maze.free_cells() if c not in maze.start_cells]
    total = N_FOOD + N_BOMBS
    if len(candidates) < total:
        raise ValueError("gather arena too small for the site count")
    picks = rng.choice(len(candidates), size=total, replace=False)
    centers = np.array([maze.cell_center(candidates[i]) for i in picks])
    return centers[:N_FOOD], centers[N_FOOD:]


def has_free_path(maze: MazeSpec, src: tuple[int, int], dst: tuple[int, int]) -> bool:
    """Flood fill over free cells."""
    seen = {src}
    stack = [src]
    while stack:
        r, c = stack.pop()
        if (r, c) == dst:
            return True
        for nb in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
            if nb not in seen and not maze.is_wall_cell(*nb):
                seen.add(nb)
                stack.append(nb)
    return False
