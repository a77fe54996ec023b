"""Region partition of the known-navigable raster and its travel graph.

Seeds partition every non-obstacle pixel by nearest-seed assignment; regions
touching across a 4-neighbor pixel boundary become edge candidates, kept only
when the straight centroid-to-centroid segment stays clear of known
obstacles. Rebuilt from scratch whenever knowledge changes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt

from ..errors import SeedPlacementError
from ..geometry import Cell, pixels_on_segment
from .terrain import OBSTACLE, UNKNOWN, TraversabilityKnowledge


@dataclass(frozen=True)
class VoronoiGraph:
    seeds: np.ndarray  # int (n, 2)
    region_map: np.ndarray  # int32 (H, W); -1 on known obstacles
    centroids: np.ndarray  # float (n, 2)
    edges: tuple[tuple[int, int, float], ...]  # (i, j, length), i < j
    unknown_fraction: np.ndarray  # float (n,): share of Unknown pixels per region

    def __post_init__(self):
        for name in ("seeds", "region_map", "centroids", "unknown_fraction"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.centroids)

    def neighbors(self, node: int) -> list[tuple[int, float]]:
        out = []
        for i, j, length in self.edges:
            if i == node:
                out.append((j, length))
            elif j == node:
                out.append((i, length))
        return out

    def node_of(self, px: Cell) -> int:
        return int(self.region_map[px])

    def region_is_unknown(self, node: int) -> bool:
        return bool(self.unknown_fraction[node] > 0.5)

    def to_json(self) -> str:
        return json.dumps(
            {
                "v": 1,
                "nodes": [
                    {
                        "id": i,
                        "centroid": [float(r), float(c)],
                        "unknown": bool(self.region_is_unknown(i)),
                    }
                    for i, (r, c) in enumerate(self.centroids)
                ],
                "edges": [
                    {"a": i, "b": j, "length": length} for i, j, length in self.edges
                ],
            }
        )


def sample_seeds(
    knowledge: TraversabilityKnowledge,
    count: int = 180,
    boundary_fraction: float = 0.4,
    rng: np.random.Generator | None = None,
    min_spacing: float = 4.0,
    boundary_band: float = 5.0,
) -> np.ndarray:
    """Seed pixels over the non-obstacle raster: a controlled fraction within
    a band of known obstacle boundaries (narrow passages), the rest uniform.
    Rejection sampling enforces the pairwise spacing."""
    if count < 2:
        raise ValueError("need at least two seeds")
    rng = rng or np.random.default_rng(0)
    open_mask = knowledge.labels != OBSTACLE
    if not open_mask.any():
        raise SeedPlacementError("no non-obstacle pixels to seed")
    # distance to the nearest known-obstacle pixel
    if (knowledge.labels == OBSTACLE).any():
        dist = distance_transform_edt(open_mask)
        boundary_mask = open_mask & (dist <= boundary_band)
    else:
        boundary_mask = np.zeros_like(open_mask)

    n_boundary = int(round(boundary_fraction * count))
    if not boundary_mask.any():
        n_boundary = 0
    pools = [
        (np.argwhere(boundary_mask), n_boundary),
        (np.argwhere(open_mask), count - n_boundary),
    ]
    chosen: list[Cell] = []
    spacing_sq = min_spacing * min_spacing
    for pool, wanted in pools:
        if wanted == 0:
            continue
        placed = 0
        attempts = 0
        max_attempts = 400 * wanted
        while placed < wanted:
            attempts += 1
            if attempts > max_attempts:
                raise SeedPlacementError(
                    f"could not place {wanted} seeds with spacing {min_spacing}"
                )
            px = tuple(int(v) for v in pool[int(rng.integers(len(pool)))])
            ok = all(
                (px[0] - q[0]) ** 2 + (px[1] - q[1]) ** 2 >= spacing_sq
                for q in chosen
            )
            if ok:
                chosen.append(px)
                placed += 1
    return np.array(chosen, dtype=np.int64)


def build_graph(knowledge: TraversabilityKnowledge, seeds: np.ndarray) -> VoronoiGraph:
    """Partition, centroids, and obstacle-free adjacency edges."""
    if len(seeds) < 2:
        raise ValueError("need at least two seeds")
    labels = knowledge.labels
    height, width = labels.shape
    open_mask = labels != OBSTACLE
    pixels = np.argwhere(open_mask)
    # exact squared distances; argmin keeps the lowest seed index on ties
    deltas = pixels[:, None, :] - seeds[None, :, :]
    assignment = np.argmin((deltas * deltas).sum(axis=2), axis=1)
    region_map = np.full((height, width), -1, dtype=np.int32)
    region_map[pixels[:, 0], pixels[:, 1]] = assignment

    n = len(seeds)
    centroids = np.zeros((n, 2), dtype=np.float64)
    unknown_fraction = np.zeros(n, dtype=np.float64)
    for node in range(n):
        members = pixels[assignment == node]
        if len(members) == 0:
            centroids[node] = seeds[node]
            continue
        centroids[node] = members.mean(axis=0)
        unknown_fraction[node] = float(
            (labels[members[:, 0], members[:, 1]] == UNKNOWN).mean()
        )

    # candidate adjacency across 4-neighbor pixel boundaries
    candidates: set[tuple[int, int]] = set()
    for axis in (0, 1):
        a = region_map[:-1, :] if axis == 0 else region_map[:, :-1]
        b = region_map[1:, :] if axis == 0 else region_map[:, 1:]
        both = (a >= 0) & (b >= 0) & (a != b)
        for i, j in zip(a[both].tolist(), b[both].tolist()):
            candidates.add((min(i, j), max(i, j)))

    def segment_clear(p: np.ndarray, q: np.ndarray) -> bool:
        for px in pixels_on_segment(tuple(p), tuple(q)):
            if not (0 <= px[0] < height and 0 <= px[1] < width):
                return False
            if labels[px] == OBSTACLE:
                return False
        return True

    edges = []
    for i, j in sorted(candidates):
        a, b = centroids[i], centroids[j]
        if segment_clear(a, b):
            edges.append((i, j, float(np.hypot(*(a - b)))))
    return VoronoiGraph(
        seeds=np.array(seeds, dtype=np.int64),
        region_map=region_map,
        centroids=centroids,
        edges=tuple(edges),
        unknown_fraction=unknown_fraction,
    )


def greedy_bfs(graph: VoronoiGraph, agent: int, goal: int) -> list[int]:
    """Minimum-hop node path treating unknown regions as traversable; empty
    when the goal region is disconnected from the agent's."""
    if agent == goal:
        return [agent]
    adjacency: dict[int, list[int]] = {}
    for i, j, _ in graph.edges:
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
