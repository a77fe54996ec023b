"""The operator's binary map, map edits, and the expected information gain.

An edit-probability pair always obeys the mask rule: walls can only be added
where the operator currently believes the cell is free, and removed where
they believe it is a wall.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidEditError
from .geometry import Cell
from .grid import GridMaze


@dataclass(frozen=True)
class BeliefMap:
    """Binary wall/free map as held by the human operator."""

    walls: np.ndarray  # bool (H, W), True = believed wall

    def __post_init__(self):
        walls = np.asarray(self.walls, dtype=bool)
        walls.setflags(write=False)
        object.__setattr__(self, "walls", walls)

    @property
    def shape(self) -> tuple[int, int]:
        return self.walls.shape

    def is_wall(self, cell: Cell) -> bool:
        return bool(self.walls[cell])

    def to_text(self) -> str:
        return "\n".join(
            "".join("#" if w else "." for w in row) for row in self.walls
        ) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BeliefMap":
        lines = [line for line in text.splitlines() if line]
        walls = np.array([[ch == "#" for ch in line] for line in lines], dtype=bool)
        return cls(walls)


@dataclass(frozen=True)
class EditProbabilities:
    """Per-cell probabilities that the operator adds / removes a wall."""

    p_add: np.ndarray  # float (H, W)
    p_remove: np.ndarray  # float (H, W)

    def __post_init__(self):
        for name in ("p_add", "p_remove"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.p_add.shape


@dataclass(frozen=True)
class EditMask:
    """A realized operator edit: cells flipped to wall and flipped to free."""

    add: np.ndarray  # bool (H, W)
    remove: np.ndarray  # bool (H, W)

    def __post_init__(self):
        for name in ("add", "remove"):
            arr = np.asarray(getattr(self, name), dtype=bool)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def size(self) -> int:
        return int(np.count_nonzero(self.add) + np.count_nonzero(self.remove))

    @classmethod
    def empty(cls, shape: tuple[int, int]) -> "EditMask":
        return cls(np.zeros(shape, dtype=bool), np.zeros(shape, dtype=bool))

    @classmethod
    def between(cls, before: BeliefMap, after: BeliefMap) -> "EditMask":
        return cls(
            add=after.walls & ~before.walls,
            remove=~after.walls & before.walls,
        )


def check_mask_rule(belief: BeliefMap, probs: EditProbabilities) -> None:
    """Raise unless p_add lives on believed-free cells and p_remove on walls."""
    if probs.p_add.shape != belief.shape or probs.p_remove.shape != belief.shape:
        raise ValueError("probability masks do not match the belief dimensions")
    if not np.all(np.isfinite(probs.p_add)) or not np.all(np.isfinite(probs.p_remove)):
        raise ValueError("edit probabilities must be finite")
    if np.any(probs.p_add[belief.walls] != 0):
        raise InvalidEditError("p_add is nonzero on a believed-wall cell")
    if np.any(probs.p_remove[~belief.walls] != 0):
        raise InvalidEditError("p_remove is nonzero on a believed-free cell")


def expected_info_gain(probs: EditProbabilities) -> float:
    """Expected L1 belief change under independent per-cell Bernoulli edits."""
    return float(probs.p_add.sum() + probs.p_remove.sum())


def sample_edit(probs: EditProbabilities, rng: np.random.Generator) -> EditMask:
    """Draw one edit mask, each cell independently at its stated probability."""
    add = rng.random(probs.p_add.shape) < probs.p_add
    remove = rng.random(probs.p_remove.shape) < probs.p_remove
    return EditMask(add=add, remove=remove)


def apply_edit(belief: BeliefMap, edit: EditMask) -> BeliefMap:
    """Apply an edit mask; L1 distance to the result equals the edit size."""
    if np.any(edit.add & belief.walls):
        raise InvalidEditError("cannot add a wall where one is already believed")
    if np.any(edit.remove & ~belief.walls):
        raise InvalidEditError("cannot remove a wall from a believed-free cell")
    walls = belief.walls.copy()
    walls[edit.add] = True
    walls[edit.remove] = False
    return BeliefMap(walls)


def corrupt_belief(
    maze: GridMaze,
    flip_fraction: float,
    rng: np.random.Generator,
    protected=(),
) -> BeliefMap:
    """Initial operator map: ground truth with a fraction of interior cells
    flipped. `protected` cells (the marked start and goals the operator can
    see on their map) are never flipped."""
    walls = maze.walls.copy()
    protected = set(protected)
    interior = [
        (r, c)
        for r in range(1, maze.height - 1)
        for c in range(1, maze.width - 1)
        if (r, c) not in protected
    ]
    n_flips = int(round(flip_fraction * len(interior)))
    picks = rng.choice(len(interior), size=n_flips, replace=False)
    for idx in picks:
        cell = interior[int(idx)]
        walls[cell] = not walls[cell]
    return BeliefMap(walls)


def mapping_accuracy(belief: BeliefMap, maze: GridMaze) -> float:
    """Fraction of interior cells on which the belief matches the ground truth."""
    if belief.shape != maze.walls.shape:
        raise ValueError(
            f"belief shape {belief.shape} does not match maze {maze.walls.shape}"
        )
    interior = np.s_[1:-1, 1:-1]
    agree = belief.walls[interior] == maze.walls[interior]
    return float(np.count_nonzero(agree)) / agree.size
