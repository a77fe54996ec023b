"""Turning interaction segments into model tensors, plus data augmentation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..belief import BeliefMap, EditMask
from ..geometry import Cell
from ..grid import Observation

CHANNEL_BELIEF = 0
CHANNEL_PATH = 1
CHANNEL_VISIBLE = 2
CHANNEL_VISIBLE_WALL = 3
N_CHANNELS = 4

CONTINUOUS_SIZE = 150


@dataclass(frozen=True)
class Segment:
    """One communication event: (map before, robot path, transmission, map after)."""

    belief_before: BeliefMap
    tau: tuple[Cell, ...]
    observation: Observation
    belief_after: BeliefMap

    def __post_init__(self):
        if not self.tau:
            raise ValueError("segment path is empty")
        if self.observation.camera.cell != self.tau[-1]:
            raise ValueError("camera must sit at the end of the path")
        if self.belief_before.shape != self.belief_after.shape:
            raise ValueError("belief maps changed dimensions mid-segment")

    @property
    def label(self) -> EditMask:
        return EditMask.between(self.belief_before, self.belief_after)


def encode(segment: Segment) -> np.ndarray:
    """Four binary masks stacked channel-first: belief walls, path, visible, visible walls."""
    height, width = segment.belief_before.shape
    out = np.zeros((N_CHANNELS, height, width), dtype=np.float64)
    out[CHANNEL_BELIEF] = segment.belief_before.walls
    for cell in segment.tau:
        if not (0 <= cell[0] < height and 0 <= cell[1] < width):
            raise ValueError(f"path cell {cell} outside the map")
        out[CHANNEL_PATH][cell] = 1.0
    for cell, is_wall in zip(segment.observation.visible, segment.observation.walls):
        out[CHANNEL_VISIBLE][cell] = 1.0
        if is_wall:
            out[CHANNEL_VISIBLE_WALL][cell] = 1.0
    return out


def encode_raster(
    belief_walls: np.ndarray,
    path_mask: np.ndarray,
    visible_mask: np.ndarray,
    visible_wall_mask: np.ndarray,
) -> np.ndarray:
    """Channel stack for raster worlds where the masks are built directly."""
    out = np.stack(
        [
            belief_walls.astype(np.float64),
            path_mask.astype(np.float64),
            visible_mask.astype(np.float64),
            visible_wall_mask.astype(np.float64),
        ]
    )
    if np.any(out[CHANNEL_VISIBLE_WALL] > out[CHANNEL_VISIBLE]):
        raise ValueError("visible-wall mask must be a subset of the visible mask")
    return out


DIHEDRAL_OPS = tuple(range(8))  # rotation k = op % 4, horizontal flip if op >= 4


def _apply_dihedral(arr: np.ndarray, op: int) -> np.ndarray:
    out = np.rot90(arr, k=op % 4, axes=(-2, -1))
    if op >= 4:
        out = np.flip(out, axis=-1)
    return np.ascontiguousarray(out)


def _invert_dihedral(arr: np.ndarray, op: int) -> np.ndarray:
    out = arr
    if op >= 4:
        out = np.flip(out, axis=-1)
    return np.ascontiguousarray(np.rot90(out, k=-(op % 4), axes=(-2, -1)))


def augment_discrete(
    channels: np.ndarray, label: EditMask, op: int
) -> tuple[np.ndarray, EditMask]:
    """Apply one of the 8 square symmetries to the input stack and both labels."""
    if channels.shape[-1] != channels.shape[-2]:
        raise ValueError("dihedral augmentation needs square tensors")
    return (
        _apply_dihedral(channels, op),
        EditMask(_apply_dihedral(label.add, op), _apply_dihedral(label.remove, op)),
    )


def invert_discrete(
    channels: np.ndarray, label: EditMask, op: int
) -> tuple[np.ndarray, EditMask]:
    return (
        _invert_dihedral(channels, op),
        EditMask(_invert_dihedral(label.add, op), _invert_dihedral(label.remove, op)),
    )


def _nearest_resample(mask: np.ndarray, side: int) -> np.ndarray:
    src = mask.shape[-1]
    idx = np.minimum((np.arange(side) * src) // side, src - 1)
    return mask[..., idx[:, None], idx[None, :]]


def _nearest_rotate(mask: np.ndarray, angle_rad: float) -> np.ndarray:
    """Rotate about the array center, nearest-neighbor, zeros outside."""
    side = mask.shape[-1]
    center = (side - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    # Inverse map: sample the source at the backward-rotated coordinate.
    cos_a = math.cos(angle_rad)
    sin_a = math.sin(angle_rad)
    dr = rows - center
    dc = cols - center
    src_r = np.rint(center + cos_a * dr + sin_a * dc).astype(int)
    src_c = np.rint(center - sin_a * dr + cos_a * dc).astype(int)
    valid = (src_r >= 0) & (src_r < side) & (src_c >= 0) & (src_c < side)
    out = np.zeros_like(mask)
    out[..., valid] = mask[..., src_r[valid], src_c[valid]]
    return out


def augment_continuous(
    segment: Segment,
    rng: np.random.Generator,
    canvas: int = CONTINUOUS_SIZE,
) -> tuple[np.ndarray, EditMask]:
    """Upscale a discrete segment onto the raster canvas with a random pose.

    Nearest-neighbor upscale to a random side in [100, 150], uniform random
    rotation, optional axis flips, then centered embedding on a zero canvas.
    """
    channels = encode(segment)
    label = segment.label
    stack = np.concatenate(
        [channels, label.add[None].astype(np.float64), label.remove[None].astype(np.float64)]
    )
    side = int(rng.integers(100, canvas + 1))
    angle = float(rng.uniform(0.0, 2.0 * math.pi))
    flip_r = bool(rng.integers(2))
    flip_c = bool(rng.integers(2))

    big = _nearest_resample(stack, side)
    if flip_r:
        big = np.flip(big, axis=-2)
    if flip_c:
        big = np.flip(big, axis=-1)
    big = _nearest_rotate(big, angle)

    out = np.zeros((stack.shape[0], canvas, canvas), dtype=np.float64)
    offset = (canvas - side) // 2
    out[:, offset : offset + side, offset : offset + side] = big
    return (
        out[:N_CHANNELS],
        EditMask(out[N_CHANNELS].astype(bool), out[N_CHANNELS + 1].astype(bool)),
    )
