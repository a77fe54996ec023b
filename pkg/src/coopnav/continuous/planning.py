"""Planning over the region graph, the pixel-level operator, and the
closed-loop waterway episode.

Movement actions hop between adjacent region centroids (cost proportional to
edge length); unknown-region hops carry feasibility 0.5 and fail half the
time in simulation. Communication picks one of 16 camera angles at the
robot's position and fires when the expected map change beats a fixed cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..belief import BeliefMap, EditMask, EditProbabilities, apply_edit, expected_info_gain, sample_edit
from ..errors import PlanningError
from ..geometry import Cell, pixels_on_segment
from ..planner.mcts import MctsConfig, MctsEngine
from ..planner.rewards import RewardConfig
from .terrain import (
    OBSTACLE,
    RASTER_SIZE,
    TRAVERSABLE,
    UNKNOWN,
    TerrainMap,
    TraversabilityKnowledge,
    observe_radial,
    visible_cone_pixels,
)
from .voronoi import VoronoiGraph, build_graph, greedy_bfs, sample_seeds

N_CAMERA_ANGLES = 16
COMM_COST = 8.0


@dataclass(frozen=True)
class PixelHumanConfig:
    """Per-pixel edit statistics of the synthetic waterway operator."""

    base_rate: float = 0.9
    decay: float = 0.03  # per-pixel distance decay
    alignment_bonus: float = 0.5
    false_rate: float = 0.0
    path_clears_obstacles: bool = True


def continuous_edit_probs(
    belief: BeliefMap,
    visible: list[Cell],
    truth_obstacles: np.ndarray,
    camera: Cell,
    config: PixelHumanConfig,
) -> EditProbabilities:
    """Exact conditional edit probabilities for one transmitted ego-view."""
    p_add = np.zeros(belief.shape)
    p_remove = np.zeros(belief.shape)
    walls = belief.walls
    aligned = np.zeros_like(walls)
    aligned[1:, :] |= walls[:-1, :]
    aligned[:-1, :] |= walls[1:, :]
    aligned[:, 1:] |= walls[:, :-1]
    aligned[:, :-1] |= walls[:, 1:]
    for px in visible:
        truth = bool(truth_obstacles[px])
        believed = bool(walls[px])
        if truth != believed:
            dist = math.hypot(px[0] - camera[0], px[1] - camera[1])
            p = config.base_rate * math.exp(-config.decay * dist)
            if aligned[px]:
                p *= 1.0 + config.alignment_bonus
            p = min(max(p, 0.0), 1.0)
        else:
            p = config.false_rate
        if believed:
            p_remove[px] = p
        else:
            p_add[px] = p
    return EditProbabilities(p_add=p_add, p_remove=p_remove)


def path_pixels(centroids: np.ndarray, node_path: list[int]) -> list[Cell]:
    """Raster pixels swept by the centroid-to-centroid hops of a node path."""
    out: list[Cell] = []
    for a, b in zip(node_path, node_path[1:]):
        out.extend(pixels_on_segment(tuple(centroids[a]), tuple(centroids[b])))
    if not out and node_path:
        r, c = centroids[node_path[0]]
        out.append((int(r), int(c)))
    seen = set()
    unique = []
    for px in out:
        if px not in seen:
            seen.add(px)
            unique.append(px)
    return unique


def encode_continuous(
    belief: BeliefMap,
    path_px: list[Cell],
    visible: list[Cell],
    truth_obstacles: np.ndarray,
) -> np.ndarray:
    """Four-channel 150x150 stack mirroring the discrete encoding."""
    size = belief.shape[0]
    out = np.zeros((4, size, size), dtype=np.float64)
    out[0] = belief.walls
    for px in path_px:
        if 0 <= px[0] < size and 0 <= px[1] < size:
            out[1][px] = 1.0
    for px in visible:
        out[2][px] = 1.0
        if truth_obstacles[px]:
            out[3][px] = 1.0
    return out


def camera_angles(n: int = N_CAMERA_ANGLES) -> list[tuple[float, float]]:
    return [
        (math.sin(2 * math.pi * k / n), math.cos(2 * math.pi * k / n))
        for k in range(n)
    ]


class AnalyticRasterModel:
    """The pixel operator's exact probabilities as the perception model."""

    def __init__(self, config: PixelHumanConfig, knowledge_labels: np.ndarray):
        self.config = config
        self.labels = knowledge_labels  # the robot's raster knowledge

    def predict_raster(
        self, belief: BeliefMap, path_px, visible, camera: Cell
    ) -> EditProbabilities:
        known_obstacle = self.labels == OBSTACLE
        probs = continuous_edit_probs(
            belief, list(visible), known_obstacle, camera, self.config
        )
        if not self.config.path_clears_obstacles:
            return probs
        forced = np.zeros(belief.shape, dtype=bool)
        for px in path_px:
            if belief.is_wall(px):
                forced[px] = True
        return EditProbabilities(
            p_add=probs.p_add, p_remove=np.where(forced, 1.0, probs.p_remove)
        )


class NetworkRasterModel:
    """Trained encoder-decoder wrapper with the same raster interface."""

    def __init__(self, model):
        self.model = model  # NeuralPerceptionModel (continuous-encdec)

    def predict_raster(self, belief, path_px, visible, camera) -> EditProbabilities:
        # channel 4 needs true labels for the visible set: during planning the
        # robot substitutes what it knows, which within sensing range is truth
        size = belief.shape[0]
        truth = np.zeros((size, size), dtype=bool)
        labels = getattr(self.model, "knowledge_labels", None)
        if labels is not None:
            truth = labels == OBSTACLE
        stack = encode_continuous(belief, path_px, list(visible), truth)
        probs = self.model.predict_encoded(stack[None])[0]
        return EditProbabilities(p_add=probs[0], p_remove=probs[1])


@dataclass(frozen=True)
class GraphNavState:
    node_path: tuple[int, ...]  # nodes visited since the last communication
    claimed: bool = False  # goal reached along this branch

    @property
    def node(self) -> int:
        return self.node_path[-1]


class GraphNavigationProblem:
    """Search binding over a region graph snapshot."""

    def __init__(
        self,
        graph: VoronoiGraph,
        goal: int,
        guidance_nodes,
        gamma: float = 0.99,
        goal_reward: float = 100.0,
        belief: BeliefMap | None = None,
    ):
        self.graph = graph
        self.goal = goal
        self.zeta = frozenset(guidance_nodes)
        self.gamma = gamma
        self.goal_reward = goal_reward
        self.belief = belief
        self._adjacency: dict[int, list[tuple[int, float]]] = {}
        lengths = [length for _, _, length in graph.edges] or [1.0]
        self.norm = float(np.mean(lengths))
        for i, j, length in graph.edges:
            self._adjacency.setdefault(i, []).append((j, length))
            self._adjacency.setdefault(j, []).append((i, length))
        for node_list in self._adjacency.values():
            node_list.sort()
        self._suspect: dict[tuple[int, int], bool] = {}
        self._field = self._goal_field()

    def _edge_suspect(self, a: int, b: int) -> bool:
        """The operator's map marks this hop as crossing an obstacle."""
        if self.belief is None:
            return False
        key = (min(a, b), max(a, b))
        hit = self._suspect.get(key)
        if hit is None:
            walls = self.belief.walls
            size = walls.shape[0]
            hit = False
            for px in pixels_on_segment(
                tuple(self.graph.centroids[a]), tuple(self.graph.centroids[b])
            ):
                if 0 <= px[0] < size and 0 <= px[1] < size and walls[px]:
                    hit = True
                    break
            self._suspect[key] = hit
        return hit

    def _goal_field(self) -> dict[int, float]:
        import heapq

        dist = {self.goal: 0.0}
        heap = [(0.0, self.goal)]
        while heap:
            cost, node = heapq.heappop(heap)
            if cost > dist.get(node, float("inf")):
                continue
            for nb, length in self._adjacency.get(node, []):
                step = length / self.norm
                if self.graph.region_is_unknown(nb):
                    step *= 2.0
                if self._edge_suspect(node, nb):
                    step *= 4.0
                nd = cost + step
                if nd < dist.get(nb, float("inf")):
                    dist[nb] = nd
                    heapq.heappush(heap, (nd, nb))
        return dist

    # -- engine interface --------------------------------------------------
    def actions(self, state: GraphNavState):
        return [nb for nb, _ in self._adjacency.get(state.node, [])]

    def is_terminal(self, state: GraphNavState) -> bool:
        return state.claimed

    def _edge_length(self, a: int, b: int) -> float:
        for nb, length in self._adjacency.get(a, []):
            if nb == b:
                return length
        raise PlanningError(f"nodes {a} and {b} are not adjacent")

    def _step_reward(self, path, target: int) -> float:
        reward = -self._edge_length(path[-1], target) / self.norm
        if self.zeta and target not in self.zeta:
            reward -= math.log(max(len(path) + 1, 2)) * 0.5
        reward -= sum(1 for n in path if n == target)
        if target == self.goal:
            reward += self.goal_reward
        return reward

    def step(self, state: GraphNavState, target: int):
        reward = self._step_reward(state.node_path, target)
        delta = 0.5 if self.graph.region_is_unknown(target) else 1.0
        nxt = GraphNavState(
            node_path=state.node_path + (target,), claimed=target == self.goal
        )
        return nxt, reward, delta, False, nxt.claimed

    def rollout(self, state: GraphNavState, rng: np.random.Generator, max_depth: int) -> float:
        if state.claimed:
            return 0.0
        path = list(state.node_path)
        node = state.node
        q = 0.0
        discount = 1.0
        for _ in range(max_depth):
            options = self._adjacency.get(node, [])
            if not options:
                break
            if rng.random() < 0.9:
                best = min(
                    self._field.get(nb, float("inf")) for nb, _ in options
                )
                ties = [nb for nb, _ in options if self._field.get(nb, float("inf")) == best]
                target = ties[int(rng.integers(len(ties)))]
            else:
                target = options[int(rng.integers(len(options)))][0]
            if self.graph.region_is_unknown(target) and rng.random() < 0.5:
                path.append(node)  # hop failed: charged, not moved
                q += discount * (
                    -self._edge_length(node, target) / self.norm
                )
                discount *= self.gamma
                continue
            q += discount * self._step_reward(path, target)
            path.append(target)
            node = target
            if target == self.goal:
                break
            discount *= self.gamma
        return q


def plan_continuous(
    graph: VoronoiGraph,
    agent_node: int,
    goal_node: int,
    belief: BeliefMap,
    guidance_nodes,
    model,
    knowledge: TraversabilityKnowledge,
    agent_px: Cell,
    rng: np.random.Generator,
    mcts_config: MctsConfig | None = None,
    comm_cost: float = COMM_COST,
    last_comm_px: Cell | None = None,
    path_px_since_comm: list[Cell] | None = None,
):
    """One turn: either ("communicate", angle_index, gain) or ("move", node).

    Communication fires at the gain-maximizing of 16 camera angles whenever
    the expected perception change exceeds the fixed cost; otherwise the
    search picks the neighbor hop.
    """
    if not graph.neighbors(agent_node):
        raise PlanningError("agent region has no graph neighbors")
    # -- communication: best angle vs fixed cost
    best_gain = 0.0
    best_angle = None
    path_px = path_px_since_comm or [agent_px]
    for index, heading in enumerate(camera_angles()):
        visible = known_cone_pixels(knowledge, agent_px, heading)
        probs = model.predict_raster(belief, path_px, visible, agent_px)
        gain = expected_info_gain(probs)
        if gain > best_gain:
            best_gain = gain
            best_angle = index
    if best_angle is not None and best_gain > comm_cost:
        return ("communicate", best_angle, best_gain)

    problem = GraphNavigationProblem(graph, goal_node, guidance_nodes, belief=belief)
    config = mcts_config or MctsConfig()
    engine = MctsEngine(problem, config, rng, root_min_visits=2)
    root = engine.search(GraphNavState(node_path=(agent_node,)))
    return ("move", engine.best_root_action(root), 0.0)


def known_cone_pixels(
    knowledge: TraversabilityKnowledge,
    pose: Cell,
    heading: tuple[float, float],
    fov_deg: float = 90.0,
    radius: int = 50,
) -> list[Cell]:
    """The transmission the robot can promise: known pixels in the cone,
    occluded by known obstacles only."""
    labels = knowledge.labels
    size = labels.shape[0]

    def known_obstacle(px: Cell) -> bool:
        return bool(labels[px] == OBSTACLE)

    from ..geometry import first_blocker

    half = math.radians(fov_deg) / 2.0
    norm = math.hypot(*heading)
    hr, hc = heading[0] / norm, heading[1] / norm
    cos_half = math.cos(half)
    out = []
    r0, r1 = max(0, pose[0] - radius), min(size, pose[0] + radius + 1)
    c0, c1 = max(0, pose[1] - radius), min(size, pose[1] + radius + 1)
    radius_sq = radius * radius
    for r in range(r0, r1):
        dr = r - pose[0]
        for c in range(c0, c1):
            dc = c - pose[1]
            if dr * dr + dc * dc > radius_sq or (dr == 0 and dc == 0):
                continue
            if labels[r, c] == UNKNOWN:
                continue
            if (dr * hr + dc * hc) < math.hypot(dr, dc) * cos_half - 1e-9:
                continue
            if first_blocker(pose, (r, c), known_obstacle) is None:
                out.append((r, c))
    return out
