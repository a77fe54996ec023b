"""Closed-loop waterway episodes and the constructed dead-end scenario.

The baseline hops greedily along minimum-hop graph routes with no operator in
the loop; the planner follows operator guidance, transmits directional views
when the expected map change pays for itself, and re-plans over the rebuilt
graph after every observation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..belief import BeliefMap, EditMask, apply_edit, sample_edit
from ..geometry import Cell, pixels_on_segment
from ..planner.mcts import MctsConfig
from .planning import (
    COMM_COST,
    AnalyticRasterModel,
    PixelHumanConfig,
    camera_angles,
    continuous_edit_probs,
    plan_continuous,
)
from .terrain import (
    OBSTACLE,
    RASTER_SIZE,
    TerrainMap,
    TraversabilityKnowledge,
    observe_radial,
    visible_cone_pixels,
)
from .voronoi import build_graph, greedy_bfs, sample_seeds

GOAL_TOLERANCE = 6.0


@dataclass
class ContinuousMetrics:
    policy: str
    path_length: float = 0.0
    hops: int = 0
    communications: int = 0
    completed: bool = False
    trajectory: list = field(default_factory=list)


def _travel(
    terrain: TerrainMap, start_px: Cell, target_px: Cell
) -> tuple[Cell, float, bool]:
    """Move along the straight segment, stopping short of the first true
    obstacle. Returns (reached pixel, distance traveled, blocked flag)."""
    obstacles = terrain.obstacles
    last_free = start_px
    for px in pixels_on_segment(
        (start_px[0] + 0.0, start_px[1] + 0.0), (target_px[0] + 0.0, target_px[1] + 0.0)
    ):
        if obstacles[px]:
            dist = math.hypot(last_free[0] - start_px[0], last_free[1] - start_px[1])
            return last_free, dist, True
        last_free = px
    dist = math.hypot(target_px[0] - start_px[0], target_px[1] - start_px[1])
    return target_px, dist, False


def _snap_to_region(graph, node: int, knowledge) -> Cell:
    """A representative navigable pixel for a node: the region pixel closest
    to the centroid (the centroid itself may sit on an obstacle in concave
    regions)."""
    centroid = graph.centroids[node]
    px = (int(round(centroid[0])), int(round(centroid[1])))
    size = knowledge.labels.shape[0]
    if 0 <= px[0] < size and 0 <= px[1] < size and knowledge.labels[px] != OBSTACLE:
        return px
    members = np.argwhere(graph.region_map == node)
    deltas = members - centroid
    best = members[int(np.argmin((deltas**2).sum(axis=1)))]
    return (int(best[0]), int(best[1]))


class PixelOperator:
    """Synthetic waterway operator: samples pixel edits with known statistics
    and suggests node routes over the current graph filtered by their map."""

    def __init__(self, belief: BeliefMap, config: PixelHumanConfig, rng):
        self.belief = belief
        self.config = config
        self.rng = rng

    def on_transmission(
        self, terrain: TerrainMap, camera: Cell, heading, path_px
    ) -> list[Cell]:
        visible = visible_cone_pixels(terrain, camera, heading)
        probs = continuous_edit_probs(
            self.belief, visible, terrain.obstacles, camera, self.config
        )
        edit = sample_edit(probs, self.rng)
        remove = np.array(edit.remove)
        if self.config.path_clears_obstacles:
            for px in path_px:
                if self.belief.is_wall(px):
                    remove[px] = True
        self.belief = apply_edit(self.belief, EditMask(edit.add, remove))
        return visible

    def suggest_route(self, graph, agent: int, goal: int) -> list[int]:
        """Minimum-hop route over edges the operator's map calls clear."""
        walls = self.belief.walls
        size = walls.shape[0]

        def edge_ok(i: int, j: int) -> bool:
            for px in pixels_on_segment(
                tuple(graph.centroids[i]), tuple(graph.centroids[j])
            ):
                if 0 <= px[0] < size and 0 <= px[1] < size and walls[px]:
                    return False
            return True

        adjacency: dict[int, list[int]] = {}
        for i, j, _ in graph.edges:
            if edge_ok(i, j):
                adjacency.setdefault(i, []).append(j)
                adjacency.setdefault(j, []).append(i)
        parent = {agent: agent}
        frontier = [agent]
        while frontier:
            nxt = []
            for node in frontier:
                for nb in sorted(adjacency.get(node, [])):
                    if nb in parent:
                        continue
                    parent[nb] = node
                    if nb == goal:
                        path = [goal]
                        while path[-1] != agent:
                            path.append(parent[path[-1]])
                        path.reverse()
                        return path
                    nxt.append(nb)
            frontier = nxt
        return []


def run_continuous_episode(
    terrain: TerrainMap,
    policy: str,
    rng: np.random.Generator,
    operator: PixelOperator | None = None,
    model=None,
    max_hops: int = 120,
    seed_count: int = 180,
    master_seed: int = 0,
    mcts_config: MctsConfig | None = None,
) -> ContinuousMetrics:
    """Drive one episode to the goal cove or the hop budget."""
    metrics = ContinuousMetrics(policy=policy)
    pose = terrain.start
    knowledge = observe_radial(terrain, pose, TraversabilityKnowledge.unknown())
    rebuild_index = 0

    def rebuild():
        nonlocal rebuild_index
        seeds = sample_seeds(
            knowledge,
            count=seed_count,
            boundary_fraction=0.4,
            rng=np.random.default_rng(master_seed * 1000 + rebuild_index),
        )
        rebuild_index += 1
        return build_graph(knowledge, seeds)

    graph = rebuild()
    guidance: list[int] = []
    path_px_since_comm: list[Cell] = [pose]
    metrics.trajectory.append(pose)

    if policy == "ig-mcts" and operator is not None:
        guidance = operator.suggest_route(
            graph, graph.node_of(pose), graph.node_of(terrain.goal)
        )

    for _ in range(max_hops):
        if math.hypot(pose[0] - terrain.goal[0], pose[1] - terrain.goal[1]) <= GOAL_TOLERANCE:
            metrics.completed = True
            break
        agent_node = graph.node_of(pose)
        goal_node = graph.node_of(terrain.goal)

        if policy == "greedy-bfs":
            route = greedy_bfs(graph, agent_node, goal_node)
            if len(route) < 2:
                break
            target_node = route[1]
        else:
            the_model = model or AnalyticRasterModel(
                operator_config(operator), knowledge.labels
            )
            if isinstance(the_model, AnalyticRasterModel):
                the_model.labels = knowledge.labels
            decision = plan_continuous(
                graph,
                agent_node,
                goal_node,
                operator.belief,
                guidance,
                the_model,
                knowledge,
                pose,
                rng,
                mcts_config=mcts_config,
                path_px_since_comm=path_px_since_comm,
            )
            if decision[0] == "communicate":
                heading = camera_angles()[decision[1]]
                visible = operator.on_transmission(
                    terrain, pose, heading, path_px_since_comm
                )
                guidance = operator.suggest_route(graph, agent_node, goal_node)
                metrics.communications += 1
                path_px_since_comm = [pose]
                metrics.trajectory.append(pose)
                continue
            target_node = decision[1]

        # goal-region arrival: head for the goal cove itself
        if target_node == goal_node and agent_node == goal_node:
            target_px = terrain.goal
        else:
            target_px = _snap_to_region(graph, target_node, knowledge)
        pose, dist, blocked = _travel(terrain, pose, target_px)
        metrics.path_length += dist
        metrics.hops += 1
        path_px_since_comm.extend(
            pixels_on_segment((float(metrics.trajectory[-1][0]), float(metrics.trajectory[-1][1])),
                              (float(pose[0]), float(pose[1])))
        )
        metrics.trajectory.append(pose)
        before_unknown = knowledge.unknown_count()
        knowledge = observe_radial(terrain, pose, knowledge)
        if knowledge.unknown_count() != before_unknown or blocked:
            graph = rebuild()
            if policy == "ig-mcts" and operator is not None and guidance:
                guidance = operator.suggest_route(
                    graph, graph.node_of(pose), graph.node_of(terrain.goal)
                )
        # inside the goal region: one extra approach hop is allowed next turn
        if graph.node_of(pose) == graph.node_of(terrain.goal):
            pose2, dist2, _ = _travel(terrain, pose, terrain.goal)
            metrics.path_length += dist2
            pose = pose2
            metrics.trajectory.append(pose)
            knowledge = observe_radial(terrain, pose, knowledge)
    if math.hypot(pose[0] - terrain.goal[0], pose[1] - terrain.goal[1]) <= GOAL_TOLERANCE:
        metrics.completed = True
    return metrics


def operator_config(operator: PixelOperator | None) -> PixelHumanConfig:
    return operator.config if operator is not None else PixelHumanConfig()


def dead_end_terrain() -> TerrainMap:
    """Constructed scenario: a tempting center corridor through the dividing
    ridge dead-ends; the true passage hugs the west edge."""
    size = RASTER_SIZE
    height = np.full((size, size), -1.0)
    water = 0.0
    ridge = 1.0
    # dividing ridge across the map, open only at the west edge
    height[70:81, 14:size] = ridge
    # center notch: an inviting corridor that is sealed near its south end
    height[70:78, 70:81] = -1.0
    height[77:81, 70:81] = ridge
    # funnel walls so the notch reads as the natural route
    return TerrainMap(
        height_field=height,
        water_level=water,
        start=(20, 75),
        goal=(130, 75),
    )


def dead_end_belief(terrain: TerrainMap, phantom: bool = True) -> BeliefMap:
    """The operator's map for the dead-end scenario: the ridge and the sealed
    notch are drawn correctly, but a phantom shoal blocks part of the open
    western approach until a transmission clears it up."""
    walls = np.array(terrain.obstacles)
    if phantom:
        walls[30:44, 30:44] = True  # phantom shoal on the west approach
    return BeliefMap(walls)
