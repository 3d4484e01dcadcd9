"""Convex hulls, polygon predicates, areas and rasterisation."""
from __future__ import annotations

import enum
from typing import Sequence

import numpy as np
from shapely.geometry import Polygon as _ShapelyPolygon

from ..errors import DegenerateInputError
from .predicates import EPS, orient2d

Point = tuple[float, float]


def _monotone_chain(items, key_xy, keep_collinear: bool):
    """Andrew's monotone chain over ``items``; returns CCW order starting at the lowest-x point."""
    pts = sorted(items, key=lambda it: key_xy(it))
    if len(pts) < 3:
        return pts

    def build(seq):
        chain = []
        for p in seq:
            while len(chain) >= 2:
                d = orient2d(key_xy(chain[-2]), key_xy(chain[-1]), key_xy(p))
                if d < -EPS or (not keep_collinear and d <= EPS):
                    chain.pop()
                else:
                    break
            chain.append(p)
        return chain

    lower = build(pts)
    upper = build(reversed(pts))
    return lower[:-1] + upper[:-1]


def convex_hull(points: Sequence[Point]) -> list[Point]:
    """Strictly convex hull in counter-clockwise order.

    Raises DegenerateInputError for fewer than three points or when all of
    them are collinear.
    """
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise DegenerateInputError(f"convex hull needs at least 3 points, got {len(pts)}")
    hull = _monotone_chain(set(pts), lambda p: p, keep_collinear=False)
    if len(hull) < 3:
        raise DegenerateInputError("convex hull of collinear points")
    return hull


def hull_ids(positions: dict[int, Point]) -> list[int]:
    """Ids of the strict hull vertices, CCW."""
    if len(positions) < 3:
        raise DegenerateInputError("convex hull needs at least 3 points")
    ring = _monotone_chain(sorted(positions), lambda i: positions[i], keep_collinear=False)
    if len(ring) < 3:
        raise DegenerateInputError("convex hull of collinear points")
    return ring


def boundary_ring(positions: dict[int, Point]) -> list[int]:
    """Ids on the hull boundary in CCW order, collinear boundary points included.

    Consecutive ids of the ring are the hull sides that a constrained
    triangulation has to force: no input point lies in the interior of one.
    """
    strict = hull_ids(positions)
    ring = []
    n = len(strict)
    all_ids = list(positions)
    for k in range(n):
        a, b = strict[k], strict[(k + 1) % n]
        pa, pb = positions[a], positions[b]
        dx, dy = pb[0] - pa[0], pb[1] - pa[1]
        length2 = dx * dx + dy * dy
        on_side = []
        for i in all_ids:
            if i == a or i == b:
                continue
            p = positions[i]
            if abs(orient2d(pa, pb, p)) <= EPS:
                t = ((p[0] - pa[0]) * dx + (p[1] - pa[1]) * dy) / length2
                if 0.0 < t < 1.0:
                    on_side.append((t, i))
        ring.append(a)
        ring.extend(i for _, i in sorted(on_side))
    return ring


def signed_area(poly: Sequence[Point]) -> float:
    s = 0.0
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return 0.5 * s


def polygon_area(poly: Sequence[Point]) -> float:
    return abs(signed_area(poly))


class SideClass(enum.Enum):
    ON_LINE = "on_line"
    INNER_HALFPLANE = "inner_halfplane"
    OUTER_HALFPLANE = "outer_halfplane"


def classify_vertex_vs_hull_side(hull: Sequence[Point], side, c: Point, eps: float = EPS) -> SideClass:
    """Where ``c`` lies relative to the line through one side of ``hull``.

    ``side`` is either a pair of vertex indices into ``hull`` or a pair of
    points. The interior half-plane is the one the polygon's winding puts
    on the inside of that side, so clockwise polygons work as well.
    """
    a, b = side
    if isinstance(a, (int, np.integer)):
        i, j = int(a), int(b)
        n = len(hull)
        # walk the side in polygon order
        if (i + 1) % n != j:
            i, j = j, i
        a, b = hull[i], hull[j]
    else:
        n = len(hull)
        idx = {tuple(map(float, p)): k for k, p in enumerate(hull)}
        ia, ib = idx.get(tuple(map(float, a))), idx.get(tuple(map(float, b)))
        if ia is not None and ib is not None and (ib + 1) % n == ia:
            a, b = b, a
    winding = 1.0 if signed_area(hull) >= 0 else -1.0
    d = orient2d(a, b, c) * winding
    if abs(d) <= eps:
        return SideClass.ON_LINE
    return SideClass.INNER_HALFPLANE if d > 0 else SideClass.OUTER_HALFPLANE


def _as_shapely(poly: Sequence[Point]) -> _ShapelyPolygon:
    p = _ShapelyPolygon([(float(x), float(y)) for x, y in poly])
    if not p.is_valid:
        p = p.buffer(0)
    return p


def polygons_intersect(a: Sequence[Point], b: Sequence[Point], area_eps: float = 1e-9) -> bool:
    """True iff the interiors of two simple polygons overlap.

    Touching boundaries (a shared vertex or edge) do not count.
    """
    pa, pb = _as_shapely(a), _as_shapely(b)
    if not pa.intersects(pb):
        return False
    return pa.intersection(pb).area > area_eps


def intersection_area(a: Sequence[Point], b: Sequence[Point]) -> float:
    return _as_shapely(a).intersection(_as_shapely(b)).area


def clip_polygon(poly: Sequence[Point], clip: Sequence[Point]) -> list[Point]:
    """Intersection of two convex polygons as a CCW vertex list (empty if disjoint)."""
    inter = _as_shapely(poly).intersection(_as_shapely(clip))
    if inter.is_empty or inter.geom_type != "Polygon" or inter.area <= 0:
        return []
    coords = list(inter.exterior.coords)[:-1]
    if signed_area(coords) < 0:
        coords.reverse()
    return [(float(x), float(y)) for x, y in coords]


def points_in_polygon(poly: Sequence[Point], xy: np.ndarray) -> np.ndarray:
    """Even-odd containment test for an (n, 2) array of points."""
    xy = np.asarray(xy, dtype=np.float64)
    x, y = xy[:, 0], xy[:, 1]
    inside = np.zeros(len(xy), dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xs = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xs)
    return inside


def rasterize_polygon(poly: Sequence[Point], width: int, height: int) -> np.ndarray:
    """Boolean (height, width) mask of pixels whose centres lie inside ``poly``."""
    mask = np.zeros((height, width), dtype=bool)
    if len(poly) < 3:
        return mask
    arr = np.asarray(poly, dtype=np.float64)
    x0 = max(int(np.floor(arr[:, 0].min())), 0)
    x1 = min(int(np.ceil(arr[:, 0].max())) + 1, width)
    y0 = max(int(np.floor(arr[:, 1].min())), 0)
    y1 = min(int(np.ceil(arr[:, 1].max())) + 1, height)
    if x0 >= x1 or y0 >= y1:
        return mask
    gx, gy = np.meshgrid(np.arange(x0, x1) + 0.5, np.arange(y0, y1) + 0.5)
    inside = points_in_polygon(poly, np.column_stack([gx.ravel(), gy.ravel()]))
    mask[y0:y1, x0:x1] = inside.reshape(y1 - y0, x1 - x0)
    return mask
