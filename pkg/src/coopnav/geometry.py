"""Exact line-of-sight primitives shared by the grid world and the raster world.

Cells are unit squares indexed (row, col) with centers at half-integer
coordinates. A cell blocks a sight line when the center-to-center segment
meets its closed square strictly before the segment reaches the target cell;
touching a corner counts as a hit (no seeing through diagonal wall joints).
"""

from __future__ import annotations

import math
from functools import lru_cache

Cell = tuple[int, int]


@lru_cache(maxsize=65536)
def supercover_groups(dr: int, dc: int) -> tuple[tuple[Cell, ...], ...]:
    """Cells crossed by the segment from cell (0,0)'s center to cell (dr,dc)'s.

    Returned as groups sharing one entry parameter, ordered along the segment.
    A normal gridline crossing yields a single-cell group; an exact corner
    crossing yields one group holding the two corner-touched cells and the
    diagonal continuation, all reached at the same instant. Integer arithmetic
    throughout, so corner events are detected exactly.
    """
    groups: list[tuple[Cell, ...]] = [((0, 0),)]
    nr, nc = abs(dr), abs(dc)
    sr = 1 if dr > 0 else -1
    sc = 1 if dc > 0 else -1
    r = c = 0
    ir = ic = 0  # gridline crossings consumed per axis
    while ir < nr or ic < nc:
        # Compare the parameters of the next r- and c-gridline crossings:
        # (2*ir + 1) / (2*nr) vs (2*ic + 1) / (2*nc), cross-multiplied.
        decision = (2 * ir + 1) * nc - (2 * ic + 1) * nr
        if decision == 0:
            groups.append(((r + sr, c), (r, c + sc), (r + sr, c + sc)))
            r += sr
            c += sc
            ir += 1
            ic += 1
        elif decision < 0:
            r += sr
            ir += 1
            groups.append(((r, c),))
        else:
            c += sc
            ic += 1
            groups.append(((r, c),))
    return tuple(groups)


def cells_on_segment(a: Cell, b: Cell) -> list[Cell]:
    """Cells touched by the segment between the centers of cells a and b."""
    return [
        (a[0] + dr, a[1] + dc)
        for group in supercover_groups(b[0] - a[0], b[1] - a[1])
        for dr, dc in group
    ]


def first_blocker(a: Cell, b: Cell, is_wall) -> Cell | None:
    """First wall cell strictly before b on the sight line from a's center.

    Returns None when the line is clear up to entry into b. Cells touched at
    the same instant the segment enters b (a shared corner) do not block it.
    The start cell a is assumed free and is not tested.
    """
    rel_b = (b[0] - a[0], b[1] - a[1])
    for group in supercover_groups(*rel_b)[1:]:
        if rel_b in group:
            return None
        for dr, dc in group:
            if is_wall((a[0] + dr, a[1] + dc)):
                return (a[0] + dr, a[1] + dc)
    return None


def in_cone(origin: Cell, target: Cell, heading: tuple[int, int], fov_deg: float) -> bool:
    """Whether target's center lies inside the view cone at origin's center.

    The cone boundary is inclusive. fov_deg == 0 degenerates to the exact
    heading ray (tested in integer arithmetic).
    """
    vr = target[0] - origin[0]
    vc = target[1] - origin[1]
    if vr == 0 and vc == 0:
        return False
    dot = vr * heading[0] + vc * heading[1]
    if fov_deg == 0.0:
        cross = vr * heading[1] - vc * heading[0]
        return cross == 0 and dot > 0
    half = math.radians(fov_deg) / 2.0
    if half >= math.pi:
        return True
    norm = math.hypot(vr, vc)
    return dot >= norm * math.cos(half) - 1e-9


def pixels_on_segment(p0: tuple[float, float], p1: tuple[float, float]) -> list[Cell]:
    """Pixels traversed by a segment between two float points (Amanatides-Woo).

    Used for raster-world segments whose endpoints (region centroids) are not
    cell centers. At a tie both axes step, which over-approximates corner
    touches -- deliberately at least as strict as any sampling check.
    """
    r0, c0 = p0
    r1, c1 = p1
    r, c = int(math.floor(r0)), int(math.floor(c0))
    r_end, c_end = int(math.floor(r1)), int(math.floor(c1))
    pixels = [(r, c)]
    dr = r1 - r0
    dc = c1 - c0
    step_r = 1 if dr > 0 else -1
    step_c = 1 if dc > 0 else -1
    # Parameter t at which the segment crosses the next gridline per axis.
    t_max_r = ((r + (step_r > 0)) - r0) / dr if dr != 0 else math.inf
    t_max_c = ((c + (step_c > 0)) - c0) / dc if dc != 0 else math.inf
    t_delta_r = abs(1.0 / dr) if dr != 0 else math.inf
    t_delta_c = abs(1.0 / dc) if dc != 0 else math.inf
    while (r, c) != (r_end, c_end):
        if math.isclose(t_max_r, t_max_c, rel_tol=0.0, abs_tol=1e-12):
            pixels.append((r + step_r, c))
            pixels.append((r, c + step_c))
            r += step_r
            c += step_c
            t_max_r += t_delta_r
            t_max_c += t_delta_c
        elif t_max_r < t_max_c:
            r += step_r
            t_max_r += t_delta_r
        else:
            c += step_c
            t_max_c += t_delta_c
        pixels.append((r, c))
        if t_max_r > 1.0 + 1e-9 and t_max_c > 1.0 + 1e-9 and (r, c) != (r_end, c_end):
            # Numerical safety: endpoints reached up to rounding.
            break
    return pixels


def chebyshev_disc(radius: int) -> list[Cell]:
    """All offsets with Chebyshev norm <= radius, row-major order."""
    return [
        (dr, dc)
        for dr in range(-radius, radius + 1)
        for dc in range(-radius, radius + 1)
    ]
