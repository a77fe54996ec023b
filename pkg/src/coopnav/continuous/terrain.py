"""Synthetic waterway terrain and occluded radial sensing.

Height fields rasterize to a fixed 150x150 grid; everything below the water
level is navigable open water, higher ground is an obstacle. The boat senses
the true raster out to a fixed radius, with sight lines blocked by obstacle
pixels exactly like the grid world's walls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidPoseError
from ..geometry import Cell, first_blocker

RASTER_SIZE = 150
OBSERVE_RADIUS = 50

UNKNOWN = -1
TRAVERSABLE = 0
OBSTACLE = 1


@dataclass(frozen=True)
class TerrainMap:
    height_field: np.ndarray  # float (150, 150)
    water_level: float
    start: Cell
    goal: Cell

    def __post_init__(self):
        hf = np.asarray(self.height_field, dtype=np.float64)
        hf.setflags(write=False)
        object.__setattr__(self, "height_field", hf)

    @property
    def traversable(self) -> np.ndarray:
        return self.height_field < self.water_level

    @property
    def obstacles(self) -> np.ndarray:
        return ~self.traversable

    def is_obstacle(self, px: Cell) -> bool:
        return bool(self.height_field[px] >= self.water_level)


@dataclass(frozen=True)
class TraversabilityKnowledge:
    labels: np.ndarray  # int8 (150, 150): UNKNOWN / TRAVERSABLE / OBSTACLE
    observed_from: tuple[Cell, ...] = ()

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int8)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def unknown(cls, size: int = RASTER_SIZE) -> "TraversabilityKnowledge":
        return cls(np.full((size, size), UNKNOWN, dtype=np.int8))

    def unknown_count(self) -> int:
        return int(np.count_nonzero(self.labels == UNKNOWN))


def generate_terrain(seed: int, size: int = RASTER_SIZE) -> TerrainMap:
    """Sum of 8 seeded random-phase sinusoids, lightly smoothed; the water
    level is set at the 60th height percentile so 55-65% of pixels float."""
    rng = np.random.default_rng(seed)
    ys, xs = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    height = np.zeros((size, size))
    for _ in range(8):
        angle = rng.uniform(0, 2 * np.pi)
        wavelength = rng.uniform(size / 6, size / 1.5)
        phase = rng.uniform(0, 2 * np.pi)
        amplitude = rng.uniform(0.5, 1.0)
        k = 2 * np.pi / wavelength
        height += amplitude * np.sin(
            k * (np.cos(angle) * xs + np.sin(angle) * ys) + phase
        )
    # light box smoothing keeps coasts coherent at pixel scale
    padded = np.pad(height, 1, mode="edge")
    height = sum(
        padded[dr : dr + size, dc : dc + size] for dr in range(3) for dc in range(3)
    ) / 9.0
    water = float(np.percentile(height, 60.0))

    corner_a, corner_b = (12, 12), (size - 13, size - 13)
    start = _nearest_below(height, water, corner_a)
    goal = _nearest_below(height, water, corner_b)
    # carve small coves so both endpoints are navigable whatever the noise
    for center in (start, goal):
        rr, cc = np.ogrid[:size, :size]
        disc = (rr - center[0]) ** 2 + (cc - center[1]) ** 2 <= 16
        height[disc] = np.minimum(height[disc], water - 0.05)
    return TerrainMap(height_field=height, water_level=water, start=start, goal=goal)


def _nearest_below(height: np.ndarray, water: float, target: Cell) -> Cell:
    below = np.argwhere(height < water)
    if below.size == 0:
        return target
    deltas = below - np.array(target)
    idx = int(np.argmin((deltas**2).sum(axis=1)))
    return (int(below[idx][0]), int(below[idx][1]))


def observe_radial(
    terrain: TerrainMap,
    pose: Cell,
    knowledge: TraversabilityKnowledge,
    radius: int = OBSERVE_RADIUS,
) -> TraversabilityKnowledge:
    """Reveal every pixel within the radius whose sight line from the pose is
    not blocked by a closer obstacle; the first obstacle on a line is seen."""
    if terrain.is_obstacle(pose):
        raise InvalidPoseError(f"pose pixel {pose} is an obstacle")
    obstacles = terrain.obstacles
    size = obstacles.shape[0]
    labels = np.array(knowledge.labels)
    labels[pose] = TRAVERSABLE

    def is_obstacle(px: Cell) -> bool:
        return bool(obstacles[px])

    r0 = max(0, pose[0] - radius)
    r1 = min(size, pose[0] + radius + 1)
    c0 = max(0, pose[1] - radius)
    c1 = min(size, pose[1] + radius + 1)
    radius_sq = radius * radius
    for r in range(r0, r1):
        dr = r - pose[0]
        for c in range(c0, c1):
            dc = c - pose[1]
            if dr * dr + dc * dc > radius_sq:
                continue
            px = (r, c)
            if px == pose:
                continue
            if labels[px] != UNKNOWN:
                continue
            if first_blocker(pose, px, is_obstacle) is None:
                labels[px] = OBSTACLE if obstacles[px] else TRAVERSABLE
    return TraversabilityKnowledge(
        labels=labels, observed_from=knowledge.observed_from + (pose,)
    )


def visible_cone_pixels(
    terrain: TerrainMap,
    pose: Cell,
    heading: tuple[float, float],
    fov_deg: float = 90.0,
    radius: int = OBSERVE_RADIUS,
) -> list[Cell]:
    """True-world pixels inside a directional cone with obstacle occlusion;
    the content of one transmitted ego-view."""
    obstacles = terrain.obstacles
    size = obstacles.shape[0]

    def is_obstacle(px: Cell) -> bool:
        return bool(obstacles[px])

    out: list[Cell] = []
    r0 = max(0, pose[0] - radius)
    r1 = min(size, pose[0] + radius + 1)
    c0 = max(0, pose[1] - radius)
    c1 = min(size, pose[1] + radius + 1)
    radius_sq = radius * radius
    import math

    half = math.radians(fov_deg) / 2.0
    norm = math.hypot(*heading)
    hr, hc = heading[0] / norm, heading[1] / norm
    cos_half = math.cos(half)
    for r in range(r0, r1):
        dr = r - pose[0]
        for c in range(c0, c1):
            dc = c - pose[1]
            if dr * dr + dc * dc > radius_sq or (dr == 0 and dc == 0):
                continue
            length = math.hypot(dr, dc)
            if (dr * hr + dc * hc) < length * cos_half - 1e-9:
                continue
            if first_blocker(pose, (r, c), is_obstacle) is None:
                out.append((r, c))
    return out


def save_pgm(height_field: np.ndarray, path) -> None:
    """Portable graymap export of the height field."""
    lo, hi = float(height_field.min()), float(height_field.max())
    scale = 255.0 / (hi - lo) if hi > lo else 1.0
    gray = ((height_field - lo) * scale).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (gray.shape[1], gray.shape[0]))
        fh.write(gray.tobytes())


def save_pbm(mask: np.ndarray, path) -> None:
    """Portable bitmap export of a boolean mask."""
    mask = np.asarray(mask, dtype=bool)
    packed = np.packbits(mask, axis=1)
    with open(path, "wb") as fh:
        fh.write(b"P4\n%d %d\n" % (mask.shape[1], mask.shape[0]))
        fh.write(packed.tobytes())
