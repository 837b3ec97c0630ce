"""Hex-grid geometry on odd-q offset coordinates.

Tiles are addressed as ``(x, y)`` where ``x`` is the column and ``y`` the row.
Distance and neighborhood use the standard cube-coordinate conversion for
odd-q vertical layouts.
"""

from __future__ import annotations

from typing import Iterator

Coord = tuple[int, int]

_EVEN_OFFSETS = ((+1, 0), (+1, -1), (0, -1), (-1, -1), (-1, 0), (0, +1))
_ODD_OFFSETS = ((+1, +1), (+1, 0), (0, -1), (-1, 0), (-1, +1), (0, +1))


def to_cube(pos: Coord) -> tuple[int, int, int]:
    x, y = pos
    cx = x
    cz = y - (x - (x & 1)) // 2
    cy = -cx - cz
    return cx, cy, cz


def distance(a: Coord, b: Coord) -> int:
    ax, ay, az = to_cube(a)
    bx, by, bz = to_cube(b)
    return max(abs(ax - bx), abs(ay - by), abs(az - bz))


def neighbors(pos: Coord) -> list[Coord]:
    x, y = pos
    offsets = _ODD_OFFSETS if x & 1 else _EVEN_OFFSETS
    return [(x + dx, y + dy) for dx, dy in offsets]


def from_cube(cx: int, cz: int) -> Coord:
    x = cx
    y = cz + (cx - (cx & 1)) // 2
    return x, y


def within(center: Coord, radius: int) -> Iterator[Coord]:
    """All coordinates at hex distance <= radius from center (unbounded grid)."""
    ccx, _, ccz = to_cube(center)
    for dx in range(-radius, radius + 1):
        for dz in range(max(-radius, -dx - radius), min(radius, -dx + radius) + 1):
            yield from_cube(ccx + dx, ccz + dz)
