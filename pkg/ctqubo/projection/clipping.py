"""
Convex polygon clipping against detector-bin strips.

Polygons are lists of (s, t) vertex tuples in the detector frame, where s runs
along the detector and t along the ray. A strip is lo <= s <= hi.
"""
import math
from typing import List, Sequence, Tuple

Point = Tuple[float, float]

UNIT_SQUARE: Tuple[Point, ...] = ((-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5))

def _clip_half_plane(polygon: Sequence[Point], limit: float, keep_above: bool) -> List[Point]:
    if not polygon:
        return []

    def inside(p: Point) -> bool:
        return p[0] >= limit if keep_above else p[0] <= limit

    def crossing(a: Point, b: Point) -> Point:
        ratio = (limit - a[0]) / (b[0] - a[0])
        return (limit, a[1] + ratio * (b[1] - a[1]))

    output: List[Point] = []
    start = polygon[-1]
    for end in polygon:
        if inside(end):
            if not inside(start):
                output.append(crossing(start, end))
            output.append(end)
        elif inside(start):
            output.append(crossing(start, end))
        start = end
    return output

def clip_to_strip(polygon: Sequence[Point], lo: float, hi: float) -> List[Point]:
    return _clip_half_plane(_clip_half_plane(polygon, lo, keep_above=True), hi, keep_above=False)

def polygon_area(polygon: Sequence[Point]) -> float:
    if len(polygon) < 3:
        return 0.0
    twice = 0.0
    for (x0, y0), (x1, y1) in zip(polygon, list(polygon[1:]) + [polygon[0]]):
        twice += x0 * y1 - x1 * y0
    return abs(twice) / 2.0

def rotated_square(center_s: float, theta: float) -> List[Point]:
    """Unit pixel square rotated into the detector frame, centered at s = center_s."""
    c, s = math.cos(theta), math.sin(theta)
    return [(center_s + x * c + y * s, -x * s + y * c) for x, y in UNIT_SQUARE]

def strip_overlap_area(polygon: Sequence[Point], lo: float, hi: float) -> float:
    return polygon_area(clip_to_strip(polygon, lo, hi))
