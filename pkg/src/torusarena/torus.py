"""Coordinate algebra on a borderless (wrap-around) rectangular grid.

Axis convention used by every module: +x is east, +y is south, so "one
cell below" an agent is offset (0, 1) and moving north from row 0 wraps
to the last row.
"""

from __future__ import annotations

from typing import NamedTuple

Coord = tuple[int, int]
Offset = tuple[int, int]

VISION_RADIUS = 5

# Cardinal directions in canonical order (also the planner's tie-break order).
DIRECTIONS = ("n", "s", "e", "w")
DIR_OFFSETS: dict[str, Offset] = {
    "n": (0, -1),
    "s": (0, 1),
    "e": (1, 0),
    "w": (-1, 0),
}
OFFSET_DIRS = {off: d for d, off in DIR_OFFSETS.items()}


class Dims(NamedTuple):
    w: int
    h: int

    def validate(self) -> "Dims":
        if self.w < 1 or self.h < 1:
            raise ValueError(f"grid dimensions must be positive, got {self.w}x{self.h}")
        return self


def wrap(x: int, y: int, dims: Dims) -> Coord:
    """Normalize (x, y) into [0, w) x [0, h) with non-negative modulo."""
    return (x % dims.w, y % dims.h)


def _axis_delta(a: int, b: int, size: int) -> int:
    # Minimal signed offset; a tie at exactly half the dimension goes positive.
    d = (b - a) % size
    return d if 2 * d <= size else d - size


def delta(a: Coord, b: Coord, dims: Dims) -> Offset:
    """Per-axis signed offset of minimal magnitude with wrap(a + delta) == b."""
    return (_axis_delta(a[0], b[0], dims.w), _axis_delta(a[1], b[1], dims.h))


def torus_distance(a: Coord, b: Coord, dims: Dims) -> int:
    dx, dy = delta(a, b, dims)
    return abs(dx) + abs(dy)


def add(pos: Coord, off: Offset) -> Coord:
    return (pos[0] + off[0], pos[1] + off[1])


def sub(a: Coord, b: Coord) -> Offset:
    return (a[0] - b[0], a[1] - b[1])


def neg(off: Offset) -> Offset:
    return (-off[0], -off[1])


def manhattan(off: Offset) -> int:
    return abs(off[0]) + abs(off[1])


def diamond_cells(radius: int) -> list[Offset]:
    """Offsets with |dx|+|dy| <= radius in canonical unrolling order.

    Rows are appended top to bottom (dy from -radius to +radius), each row
    left to right. Length is 2*radius**2 + 2*radius + 1.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    cells = []
    for dy in range(-radius, radius + 1):
        span = radius - abs(dy)
        for dx in range(-span, span + 1):
            cells.append((dx, dy))
    return cells


# The 61-cell observable diamond, precomputed: every percept, plan problem
# and cache key iterates it in this exact order.
DIAMOND = tuple(diamond_cells(VISION_RADIUS))
DIAMOND_INDEX = {off: i for i, off in enumerate(DIAMOND)}

CARDINALS = tuple(DIR_OFFSETS[d] for d in DIRECTIONS)


def rotate_cw(off: Offset) -> Offset:
    # With y growing south, clockwise maps east -> south -> west -> north.
    return (-off[1], off[0])


def rotate_ccw(off: Offset) -> Offset:
    return (off[1], -off[0])
