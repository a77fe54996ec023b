"""Deterministic maze world: generation, motion primitives, visibility, knowledge.

Coordinates are (row, col) from the top-left. Headings are the four cardinal
directions N/E/S/W with N pointing toward row 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidPoseError
from .geometry import Cell, chebyshev_disc, first_blocker, in_cone

DIRECTIONS = ("N", "E", "S", "W")
DIR_VECTORS: dict[str, tuple[int, int]] = {
    "N": (-1, 0),
    "E": (0, 1),
    "S": (1, 0),
    "W": (0, -1),
}

DEFAULT_FOV_DEG = 90.0
DEFAULT_CAMERA_RANGE = 6
DEFAULT_REVEAL_RADIUS = 2

UNKNOWN = -1
FREE = 0
WALL = 1


@dataclass(frozen=True)
class GridMaze:
    """Ground-truth maze: wall mask plus start and goal cells."""

    walls: np.ndarray  # bool (size, size), True = wall
    start: Cell
    goals: tuple[Cell, ...]

    def __post_init__(self):
        walls = np.asarray(self.walls, dtype=bool)
        walls.setflags(write=False)
        object.__setattr__(self, "walls", walls)

    @property
    def height(self) -> int:
        return self.walls.shape[0]

    @property
    def width(self) -> int:
        return self.walls.shape[1]

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def is_wall(self, cell: Cell) -> bool:
        return bool(self.walls[cell])

    def free_cells(self) -> list[Cell]:
        rows, cols = np.nonzero(~self.walls)
        return list(zip(rows.tolist(), cols.tolist()))


@dataclass(frozen=True)
class RobotPose:
    cell: Cell
    heading: str = "E"


@dataclass(frozen=True)
class Action:
    """Movement in a cardinal direction, or transmitting a camera image."""

    kind: str  # "move" | "communicate"
    direction: str

    def __post_init__(self):
        if self.kind not in ("move", "communicate"):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")

    @classmethod
    def move(cls, direction: str) -> "Action":
        return cls("move", direction)

    @classmethod
    def communicate(cls, direction: str) -> "Action":
        return cls("communicate", direction)

    @property
    def index(self) -> int:
        """Stable ordering: the four moves N,E,S,W then the four camera directions."""
        base = 0 if self.kind == "move" else 4
        return base + DIRECTIONS.index(self.direction)


ALL_ACTIONS = tuple(
    [Action.move(d) for d in DIRECTIONS] + [Action.communicate(d) for d in DIRECTIONS]
)


@dataclass(frozen=True)
class Observation:
    """A camera transmission: visible cells with their true wall labels."""

    camera: RobotPose
    visible: tuple[Cell, ...]  # sorted row-major
    walls: tuple[bool, ...]  # aligned with `visible`

    def wall_cells(self) -> set[Cell]:
        return {c for c, w in zip(self.visible, self.walls) if w}

    def label(self, cell: Cell) -> bool:
        return self.walls[self.visible.index(cell)]


@dataclass(frozen=True)
class KnowledgeGrid:
    """What the robot has learned: per-cell label plus the visited set."""

    labels: np.ndarray  # int8 (size, size): UNKNOWN / FREE / WALL
    visited: frozenset[Cell] = field(default_factory=frozenset)
    reveal_radius: int = DEFAULT_REVEAL_RADIUS

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int8)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def unknown(cls, size: int, reveal_radius: int = DEFAULT_REVEAL_RADIUS) -> "KnowledgeGrid":
        return cls(np.full((size, size), UNKNOWN, dtype=np.int8), frozenset(), reveal_radius)

    def label(self, cell: Cell) -> int:
        return int(self.labels[cell])

    def unknown_count(self) -> int:
        return int(np.count_nonzero(self.labels == UNKNOWN))


def generate_maze(seed: int, size: int = 13) -> GridMaze:
    """Generate a connected maze with 4 goals, one per quadrant.

    Recursive backtracker over the odd-coordinate lattice, then 10% of the
    interior walls adjacent to the free region are knocked out to add loops.
    """
    if size < 5 or size % 2 == 0:
        raise ValueError(f"maze size must be odd and >= 5, got {size}")
    rng = np.random.default_rng(seed)
    walls = np.ones((size, size), dtype=bool)

    def neighbors2(cell: Cell) -> list[Cell]:
        r, c = cell
        out = []
        for dr, dc in ((-2, 0), (2, 0), (0, -2), (0, 2)):
            nr, nc = r + dr, c + dc
            if 1 <= nr < size - 1 and 1 <= nc < size - 1:
                out.append((nr, nc))
        return out

    first = (1, 1)
    walls[first] = False
    stack = [first]
    seen = {first}
    while stack:
        current = stack[-1]
        options = [n for n in neighbors2(current) if n not in seen]
        if not options:
            stack.pop()
            continue
        nxt = options[rng.integers(len(options))]
        between = ((current[0] + nxt[0]) // 2, (current[1] + nxt[1]) // 2)
        walls[between] = False
        walls[nxt] = False
        seen.add(nxt)
        stack.append(nxt)

    # Knock out extra interior walls for loops. A wall is only converted when
    # it already touches the free region, which keeps the maze connected.
    interior_walls = [
        (r, c)
        for r in range(1, size - 1)
        for c in range(1, size - 1)
        if walls[r, c]
    ]
    rng.shuffle(interior_walls)
    quota = int(round(0.10 * len(interior_walls)))
    knocked = 0
    for cell in interior_walls:
        if knocked >= quota:
            break
        r, c = cell
        touches_free = any(
            not walls[r + dr, c + dc] for dr, dc in DIR_VECTORS.values()
        )
        if touches_free:
            walls[cell] = False
            knocked += 1

    # Start: free cell closest to the center, ties row-major.
    center = (size // 2, size // 2)
    free = [
        (r, c) for r in range(size) for c in range(size) if not walls[r, c]
    ]
    start = min(free, key=lambda p: ((p[0] - center[0]) ** 2 + (p[1] - center[1]) ** 2, p))

    # One goal per quadrant (strictly off the middle row/column), not the start.
    mid = size // 2
    quadrants = [
        [p for p in free if p[0] < mid and p[1] < mid],
        [p for p in free if p[0] < mid and p[1] > mid],
        [p for p in free if p[0] > mid and p[1] < mid],
        [p for p in free if p[0] > mid and p[1] > mid],
    ]
    relaxed = [
        [p for p in free if p[0] <= mid and p[1] <= mid],
        [p for p in free if p[0] <= mid and p[1] >= mid],
        [p for p in free if p[0] >= mid and p[1] <= mid],
        [p for p in free if p[0] >= mid and p[1] >= mid],
    ]
    goals: list[Cell] = []
    for quadrant, fallback in zip(quadrants, relaxed):
        options = sorted(p for p in quadrant if p != start and p not in goals)
        if not options:  # tiny mazes may have a bare strict quadrant
            options = sorted(p for p in fallback if p != start and p not in goals)
        goals.append(options[rng.integers(len(options))])

    return GridMaze(walls=walls, start=start, goals=tuple(goals))


def transition(maze: GridMaze, pose: RobotPose, action: Action) -> RobotPose:
    """Deterministic motion: blocked moves keep the cell but update the heading."""
    if action.kind != "move":
        raise ValueError("transition only applies to movement actions")
    dr, dc = DIR_VECTORS[action.direction]
    target = (pose.cell[0] + dr, pose.cell[1] + dc)
    if maze.in_bounds(target) and not maze.is_wall(target):
        return RobotPose(cell=target, heading=action.direction)
    return RobotPose(cell=pose.cell, heading=action.direction)


def visible_cells(
    maze: GridMaze,
    camera: RobotPose,
    fov_deg: float = DEFAULT_FOV_DEG,
    max_range: int = DEFAULT_CAMERA_RANGE,
) -> Observation:
    """Cells seen by a camera at `camera.cell` facing `camera.heading`.

    A cell is visible when its center lies in the view cone within range and
    no wall sits strictly before it on the center-to-center sight line; the
    first wall on a line is itself visible.
    """
    if maze.is_wall(camera.cell):
        raise InvalidPoseError(f"camera cell {camera.cell} is a wall")
    heading = DIR_VECTORS[camera.heading]
    origin = camera.cell
    range_sq = max_range * max_range
    visible: list[Cell] = []
    walls: list[bool] = []
    for r in range(max(0, origin[0] - max_range), min(maze.height, origin[0] + max_range + 1)):
        for c in range(max(0, origin[1] - max_range), min(maze.width, origin[1] + max_range + 1)):
            cell = (r, c)
            if cell == origin:
                continue
            dr = r - origin[0]
            dc = c - origin[1]
            if dr * dr + dc * dc > range_sq:
                continue
            if not in_cone(origin, cell, heading, fov_deg):
                continue
            if first_blocker(origin, cell, maze.is_wall) is None:
                visible.append(cell)
                walls.append(maze.is_wall(cell))
    return Observation(camera=camera, visible=tuple(visible), walls=tuple(walls))


def reveal(knowledge: KnowledgeGrid, pose: RobotPose, maze: GridMaze) -> KnowledgeGrid:
    """Mark the pose visited and label every non-occluded cell within the radius."""
    if maze.is_wall(pose.cell):
        raise InvalidPoseError(f"pose cell {pose.cell} is a wall")
    labels = np.array(knowledge.labels, dtype=np.int8)
    origin = pose.cell
    labels[origin] = FREE
    for dr, dc in chebyshev_disc(knowledge.reveal_radius):
        cell = (origin[0] + dr, origin[1] + dc)
        if not maze.in_bounds(cell) or cell == origin:
            continue
        if first_blocker(origin, cell, maze.is_wall) is None:
            labels[cell] = WALL if maze.is_wall(cell) else FREE
    return replace(
        knowledge,
        labels=labels,
        visited=knowledge.visited | {origin},
    )


def knowledge_from_observation(knowledge: KnowledgeGrid, obs: Observation) -> KnowledgeGrid:
    """Fold an observation's true labels into the knowledge grid."""
    labels = np.array(knowledge.labels, dtype=np.int8)
    for cell, is_wall in zip(obs.visible, obs.walls):
        labels[cell] = WALL if is_wall else FREE
    return replace(knowledge, labels=labels)


def maze_to_text(maze: GridMaze) -> str:
    """Serialize: '#' wall, '.' free, 'S' start, 'G' goal, one row per line."""
    goal_set = set(maze.goals)
    rows = []
    for r in range(maze.height):
        row = []
        for c in range(maze.width):
            cell = (r, c)
            if maze.walls[cell]:
                row.append("#")
            elif cell == maze.start:
                row.append("S")
            elif cell in goal_set:
                row.append("G")
            else:
                row.append(".")
        rows.append("".join(row))
    return "\n".join(rows) + "\n"


def maze_from_text(text: str) -> GridMaze:
    lines = [line for line in text.splitlines() if line]
    height = len(lines)
    width = len(lines[0]) if lines else 0
    if any(len(line) != width for line in lines):
        raise ValueError("ragged maze text")
    walls = np.zeros((height, width), dtype=bool)
    start = None
    goals = []
    for r, line in enumerate(lines):
        for c, ch in enumerate(line):
            if ch == "#":
                walls[r, c] = True
            elif ch == "S":
                start = (r, c)
            elif ch == "G":
                goals.append((r, c))
            elif ch != ".":
                raise ValueError(f"unknown maze character {ch!r}")
    if start is None:
        raise ValueError("maze text has no start cell")
    return GridMaze(walls=walls, start=start, goals=tuple(goals))


def shortest_path(
    passable: np.ndarray, origin: Cell, targets: set[Cell]
) -> list[Cell] | None:
    """Lexicographically-tied BFS path from origin to the nearest target.

    `passable` is a boolean grid; returns the full cell sequence including
    both endpoints, or None when no target is reachable.
    """
    if origin in targets:
        return [origin]
    height, width = passable.shape
    seen = {origin}
    parent: dict[Cell, Cell] = {}
    frontier = [origin]
    found: Cell | None = None
    while frontier and found is None:
        nxt: list[Cell] = []
        for cell in sorted(frontier):
            for dr, dc in DIR_VECTORS.values():
                nb = (cell[0] + dr, cell[1] + dc)
                if not (0 <= nb[0] < height and 0 <= nb[1] < width):
                    continue
                if not passable[nb] or nb in seen:
                    continue
                seen.add(nb)
                parent[nb] = cell
                nxt.append(nb)
        reached = sorted(set(nxt) & targets)
        if reached:
            found = reached[0]
        frontier = nxt
    if found is None:
        return None
    path = [found]
    while path[-1] != origin:
        path.append(parent[path[-1]])
    path.reverse()
    return path
