"""Synthetic map-editing operator with fully known statistics.

Stands in for crowdsourced annotators: per-cell edit probabilities follow a
closed-form rule (distance decay, alignment bonus, false-edit floor), and the
operator always relabels believed walls the robot demonstrably drove through.
Because every conditional probability is computable, datasets generated here
carry an exact Bayes entropy floor for the learned model to be measured
against.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .belief import (
    BeliefMap,
    EditMask,
    EditProbabilities,
    apply_edit,
    corrupt_belief,
    mapping_accuracy,
    sample_edit,
)
from .geometry import Cell
from .grid import (
    DIRECTIONS,
    GridMaze,
    Observation,
    RobotPose,
    generate_maze,
    shortest_path,
    visible_cells,
)
from .models.encoding import Segment


@dataclass(frozen=True)
class SynthHumanConfig:
    base_rate: float = 0.9  # edit probability at distance zero
    decay: float = 0.35  # per-cell exponential distance decay
    alignment_bonus: float = 0.5  # multiplier next to an existing believed wall
    false_rate: float = 0.01  # spurious edits on agreeing visible cells
    path_clears_walls: bool = True  # driving through a believed wall removes it

    def __post_init__(self):
        if not 0 < self.base_rate <= 1:
            raise ValueError("base rate must lie in (0, 1]")
        if self.decay <= 0:
            raise ValueError("decay must be positive")
        if self.alignment_bonus < 0:
            raise ValueError("alignment bonus must be non-negative")
        if not 0 <= self.false_rate < 0.05:
            raise ValueError("false-edit rate must lie in [0, 0.05)")


@dataclass(frozen=True)
class Guidance:
    cells: tuple[Cell, ...] = ()
    issue_step: int = 0

    def __post_init__(self):
        for a, b in zip(self.cells, self.cells[1:]):
            if abs(a[0] - b[0]) + abs(a[1] - b[1]) != 1:
                raise ValueError(f"guidance cells {a} and {b} are not adjacent")

    def __bool__(self) -> bool:
        return bool(self.cells)


@dataclass(frozen=True)
class OperatorState:
    belief: BeliefMap
    claimed_goals: frozenset[Cell] = field(default_factory=frozenset)
    guidance: Guidance = Guidance()


def _aligned_mask(belief: BeliefMap) -> np.ndarray:
    """Cells 4-adjacent to at least one believed wall."""
    walls = belief.walls
    out = np.zeros_like(walls)
    out[1:, :] |= walls[:-1, :]
    out[:-1, :] |= walls[1:, :]
    out[:, 1:] |= walls[:, :-1]
    out[:, :-1] |= walls[:, 1:]
    return out


def synth_edit_probs(
    belief: BeliefMap, obs: Observation, config: SynthHumanConfig
) -> EditProbabilities:
    """Exact per-cell edit probabilities for one transmission."""
    p_add = np.zeros(belief.shape)
    p_remove = np.zeros(belief.shape)
    aligned = _aligned_mask(belief)
    cam = obs.camera.cell
    for cell, is_wall in zip(obs.visible, obs.walls):
        believed_wall = belief.is_wall(cell)
        if is_wall != believed_wall:
            dist = math.hypot(cell[0] - cam[0], cell[1] - cam[1])
            p = config.base_rate * math.exp(-config.decay * dist)
            if aligned[cell]:
                p *= 1.0 + config.alignment_bonus
            p = min(max(p, 0.0), 1.0)
        else:
            p = config.false_rate
        if believed_wall:
            p_remove[cell] = p
        else:
            p_add[cell] = p
    return EditProbabilities(p_add=p_add, p_remove=p_remove)


def path_forced_removals(belief: BeliefMap, tau) -> np.ndarray:
    """Believed walls the robot's path visibly crossed: removed with certainty."""
    out = np.zeros(belief.shape, dtype=bool)
    for cell in tau:
        if belief.is_wall(cell):
            out[cell] = True
    return out


def conditional_edit_probs(
    belief: BeliefMap, obs: Observation, tau, config: SynthHumanConfig
) -> EditProbabilities:
    """The generator's full conditional distribution for a segment, i.e. the
    transmission probabilities overridden to 1 on path-crossed believed walls."""
    probs = synth_edit_probs(belief, obs, config)
    if not config.path_clears_walls:
        return probs
    forced = path_forced_removals(belief, tau)
    p_remove = np.where(forced, 1.0, probs.p_remove)
    return EditProbabilities(p_add=probs.p_add, p_remove=p_remove)


def bayes_floor(pairs) -> float:
    """Mean Bernoulli entropy (nats) of exact conditional probabilities,
    pooled per cell like the evaluation BCE; the minimum achievable score."""
    total = 0.0
    count = 0
    for probs, valid in pairs:
        p = np.clip(probs, 0.0, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = -(p * np.log(p) + (1 - p) * np.log1p(-p))
        ent = np.nan_to_num(ent, nan=0.0, posinf=0.0)
        total += float((ent * valid).sum())
        count += int(np.count_nonzero(valid))
    return total / count


def synth_update(
    state: OperatorState,
    obs: Observation,
    tau,
    config: SynthHumanConfig,
    rng: np.random.Generator,
) -> OperatorState:
    """Sample the operator's map update for one communication event."""
    probs = synth_edit_probs(state.belief, obs, config)
    edit = sample_edit(probs, rng)
    remove = np.array(edit.remove)
    if config.path_clears_walls:
        remove |= path_forced_removals(state.belief, tau)
    belief = apply_edit(state.belief, EditMask(edit.add, remove))
    return replace(state, belief=belief)


def suggest_path(
    state: OperatorState, robot_cell: Cell, goals
) -> Guidance:
    """Shortest believed-free path to the nearest unclaimed goal (BFS,
    lexicographic ties); empty when the operator sees no route."""
    if state.belief.is_wall(robot_cell):
        raise ValueError(f"robot cell {robot_cell} is a wall on the operator map")
    unclaimed = {g for g in goals if g not in state.claimed_goals}
    if not unclaimed:
        return Guidance()
    path = shortest_path(~state.belief.walls, robot_cell, unclaimed)
    if path is None:
        return Guidance()
    return Guidance(cells=tuple(path))


def _discrepancy_weights(belief: BeliefMap, maze: GridMaze) -> np.ndarray:
    """3x3-window mismatch counts, used to bias target sampling."""
    mismatch = (belief.walls != maze.walls).astype(np.float64)
    padded = np.pad(mismatch, 1)
    window = np.zeros_like(mismatch)
    for dr in range(3):
        for dc in range(3):
            window += padded[dr : dr + mismatch.shape[0], dc : dc + mismatch.shape[1]]
    return window


@dataclass
class GeneratorSettings:
    flip_fraction: float = 0.15
    accuracy_stop: float = 0.95
    max_communications: int = 40


def generate_episode(
    maze: GridMaze,
    config: SynthHumanConfig,
    rng: np.random.Generator,
    settings: GeneratorSettings | None = None,
) -> tuple[list[Segment], list[dict]]:
    """Drive the data-collection robot around one maze, emitting one segment
    per communication event plus a JSON-able log."""
    settings = settings or GeneratorSettings()
    belief = corrupt_belief(
        maze, settings.flip_fraction, rng, protected=(maze.start, *maze.goals)
    )
    state = OperatorState(belief=belief)
    pose_cell = maze.start
    segments: list[Segment] = []
    log: list[dict] = []
    free = sorted(maze.free_cells())
    for comm_index in range(settings.max_communications):
        if mapping_accuracy(state.belief, maze) >= settings.accuracy_stop:
            break
        weights = _discrepancy_weights(state.belief, maze)
        scores = np.array([weights[c] for c in free]) + 0.1
        scores /= scores.sum()
        target = free[int(rng.choice(len(free), p=scores))]
        path = shortest_path(~maze.walls, pose_cell, {target})
        if path is None:  # unreachable pocket; skip this target
            continue
        tau = tuple(path)
        camera = RobotPose(tau[-1], DIRECTIONS[int(rng.integers(4))])
        obs = visible_cells(maze, camera)
        before = state.belief
        state = synth_update(state, obs, tau, config, rng)
        segments.append(
            Segment(
                belief_before=before,
                tau=tau,
                observation=obs,
                belief_after=state.belief,
            )
        )
        log.append(
            {
                "communication": comm_index,
                "camera": [camera.cell[0], camera.cell[1]],
                "direction": camera.heading,
                "path_length": len(tau),
                "edits": segments[-1].label.size,
                "accuracy": mapping_accuracy(state.belief, maze),
            }
        )
        pose_cell = tau[-1]
    return segments, log


def generate_dataset(
    n_mazes: int,
    config: SynthHumanConfig | None = None,
    seed: int = 0,
    size: int = 13,
    settings: GeneratorSettings | None = None,
    log_path=None,
) -> list[Segment]:
    """Segments across freshly generated mazes; episode i uses stream seed+i."""
    if n_mazes < 1:
        raise ValueError("need at least one maze")
    config = config or SynthHumanConfig()
    all_segments: list[Segment] = []
    log_fh = open(log_path, "w") if log_path else None
    try:
        for index in range(n_mazes):
            maze = generate_maze(seed + index, size)
            rng = np.random.default_rng(seed + index)
            segments, log = generate_episode(maze, config, rng, settings)
            all_segments.extend(segments)
            if log_fh:
                for entry in log:
                    entry["maze_seed"] = seed + index
                    log_fh.write(json.dumps(entry) + "\n")
    finally:
        if log_fh:
            log_fh.close()
    return all_segments
