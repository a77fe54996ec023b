"""Binary segment-dataset files: versioned header, run-length-encoded masks.

Record layout (little-endian): height u16, width u16, camera row u16,
camera col u16, camera direction u8, then six RLE masks in a fixed order --
the four input channels (belief walls, path, visible, visible walls) and the
two label masks (adds, removes). RLE: first value u8, run count u32, then
u32 run lengths summing to height*width.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from ..belief import BeliefMap
from ..grid import DIRECTIONS, Observation, RobotPose
from .encoding import (
    CHANNEL_BELIEF,
    CHANNEL_PATH,
    CHANNEL_VISIBLE,
    CHANNEL_VISIBLE_WALL,
    Segment,
    encode,
)

MAGIC = b"CNSEG1\n"


def _rle_encode(mask: np.ndarray) -> bytes:
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return struct.pack("<BI", 0, 0)
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    runs = np.diff(np.concatenate(([0], boundaries, [flat.size])))
    out = struct.pack("<BI", int(flat[0]), len(runs))
    return out + runs.astype("<u4").tobytes()


def _rle_decode(buf: io.BytesIO, size: int, shape) -> np.ndarray:
    first, n_runs = struct.unpack("<BI", buf.read(5))
    runs = np.frombuffer(buf.read(4 * n_runs), dtype="<u4")
    if int(runs.sum()) != size:
        raise ValueError("run lengths do not cover the mask")
    flat = np.zeros(size, dtype=bool)
    value = bool(first)
    pos = 0
    for run in runs:
        if value:
            flat[pos : pos + run] = True
        value = not value
        pos += int(run)
    return flat.reshape(shape)


def save_segments(segments, path) -> None:
    segments = list(segments)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(segments)))
        for seg in segments:
            fh.write(_record_bytes(seg))


def _record_bytes(seg: Segment) -> bytes:
    height, width = seg.belief_before.shape
    cam = seg.observation.camera
    out = struct.pack(
        "<HHHHB",
        height,
        width,
        cam.cell[0],
        cam.cell[1],
        DIRECTIONS.index(cam.heading),
    )
    channels = encode(seg)
    label = seg.label
    for mask in (
        channels[CHANNEL_BELIEF],
        channels[CHANNEL_PATH],
        channels[CHANNEL_VISIBLE],
        channels[CHANNEL_VISIBLE_WALL],
        label.add,
        label.remove,
    ):
        out += _rle_encode(mask >= 0.5 if mask.dtype != bool else mask)
    return out


def load_segments(path) -> list[Segment]:
    """Rebuild segments from a dataset file.

    The path mask does not preserve visit order, so the rebuilt tau lists the
    path cells row-major with the camera cell moved to the end -- everything
    the models consume (masks, camera, labels) is exact.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    buf = io.BytesIO(data)
    if buf.read(len(MAGIC)) != MAGIC:
        raise ValueError("not a segment dataset (bad magic)")
    (count,) = struct.unpack("<I", buf.read(4))
    segments = []
    for _ in range(count):
        height, width, cam_r, cam_c, dir_idx = struct.unpack("<HHHHB", buf.read(9))
        size = height * width
        shape = (height, width)
        belief_mask = _rle_decode(buf, size, shape)
        path_mask = _rle_decode(buf, size, shape)
        visible_mask = _rle_decode(buf, size, shape)
        visible_wall = _rle_decode(buf, size, shape)
        add = _rle_decode(buf, size, shape)
        remove = _rle_decode(buf, size, shape)

        camera = RobotPose((cam_r, cam_c), DIRECTIONS[dir_idx])
        visible = [(int(r), int(c)) for r, c in np.argwhere(visible_mask)]
        walls = tuple(bool(visible_wall[c]) for c in visible)
        obs = Observation(camera=camera, visible=tuple(visible), walls=walls)
        tau = [
            (int(r), int(c))
            for r, c in np.argwhere(path_mask)
            if (int(r), int(c)) != camera.cell
        ]
        tau.append(camera.cell)
        before = BeliefMap(belief_mask)
        after_walls = belief_mask.copy()
        after_walls[add] = True
        after_walls[remove] = False
        segments.append(
            Segment(
                belief_before=before,
                tau=tuple(tau),
                observation=obs,
                belief_after=BeliefMap(after_walls),
            )
        )
    if buf.read(1):
        raise ValueError("trailing bytes after the last record")
    return segments
