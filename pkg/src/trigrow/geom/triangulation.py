"""Delaunay and constrained Delaunay triangulation.

The unconstrained triangulation starts from Qhull and is then legalised
with Lawson flips under a deterministic cocircular tie-break: of the two
diagonals of a cocircular quadrilateral, the one whose smaller endpoint id
is smaller wins. Forced segments are inserted by flipping away the edges
they cross and re-legalising every unconstrained edge that was created.
"""
from __future__ import annotations

import json
from collections import deque
from functools import cached_property
from typing import Iterable, Mapping, Optional

import numpy as np
from scipy.spatial import Delaunay as _Qhull

from ..errors import ConstraintConflictError, DegenerateInputError
from .predicates import EPS, incircle, orient2d, orient2d_many, point_on_open_segment

Point = tuple[float, float]


def _key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _canonical_triangle(a: int, b: int, c: int) -> tuple[int, int, int]:
    # rotate a CCW triple so the smallest id comes first
    if a <= b and a <= c:
        return (a, b, c)
    if b <= a and b <= c:
        return (b, c, a)
    return (c, a, b)


def incircle_tolerance(a, b, c, d) -> float:
    ad = (a[0] - d[0]) ** 2 + (a[1] - d[1]) ** 2
    bd = (b[0] - d[0]) ** 2 + (b[1] - d[1]) ** 2
    cd = (c[0] - d[0]) ** 2 + (c[1] - d[1]) ** 2
    return EPS * max(1.0, (ad + bd + cd) ** 2)


class TriangulationGraph:
    """Planar triangulation viewed as a graph.

    ``opposite(a, b)`` returns the apex of the counter-clockwise triangle
    that has the directed edge a->b, or None on the outer boundary.
    """

    def __init__(self, vertices: Mapping[int, Point], opp: Mapping[tuple[int, int], int],
                 constrained_edges: Iterable[tuple[int, int]] = ()):
        self.vertices = dict(vertices)
        self._opp = dict(opp)
        self.constrained_edges = frozenset(_key(a, b) for a, b in constrained_edges)

    @cached_property
    def edges(self) -> frozenset[tuple[int, int]]:
        return frozenset(_key(a, b) for a, b in self._opp)

    @cached_property
    def triangles(self) -> frozenset[tuple[int, int, int]]:
        return frozenset(_canonical_triangle(a, b, c) for (a, b), c in self._opp.items())

    @cached_property
    def _adjacency(self) -> dict[int, frozenset[int]]:
        adj: dict[int, set[int]] = {v: set() for v in self.vertices}
        for a, b in self._opp:
            adj[a].add(b)
            adj[b].add(a)
        return {v: frozenset(n) for v, n in adj.items()}

    def neighbors(self, v: int) -> frozenset[int]:
        return self._adjacency.get(v, frozenset())

    def opposite(self, a: int, b: int) -> Optional[int]:
        return self._opp.get((a, b))

    def has_edge(self, a: int, b: int) -> bool:
        return (a, b) in self._opp or (b, a) in self._opp

    def to_dict(self) -> dict:
        return {
            "vertices": [[int(i), float(x), float(y)] for i, (x, y) in sorted(self.vertices.items())],
            "edges": sorted([list(e) for e in self.edges]),
            "triangles": sorted([list(t) for t in self.triangles]),
            "constrained_edges": sorted([list(e) for e in self.constrained_edges]),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True) + "\n"


class _Mesh:
    def __init__(self, pos: dict[int, Point]):
        self.pos = pos
        self.opp: dict[tuple[int, int], int] = {}
        self.constrained: set[tuple[int, int]] = set()
        self.flip_budget = 0

    def add(self, a, b, c):
        self.opp[(a, b)] = c
        self.opp[(b, c)] = a
        self.opp[(c, a)] = b

    def remove(self, a, b, c):
        del self.opp[(a, b)]
        del self.opp[(b, c)]
        del self.opp[(c, a)]

    def flip(self, a, b):
        c = self.opp[(a, b)]
        d = self.opp[(b, a)]
        self.remove(a, b, c)
        self.remove(b, a, d)
        self.add(a, d, c)
        self.add(d, b, c)
        return c, d

    def should_flip(self, a, b, c, d) -> bool:
        pa, pb, pc, pd = self.pos[a], self.pos[b], self.pos[c], self.pos[d]
        v = incircle(pa, pb, pc, pd)
        tol = incircle_tolerance(pa, pb, pc, pd)
        if v > tol:
            return True
        if v < -tol:
            return False
        # cocircular: keep the diagonal holding the smaller id; flipping must stay convex
        if min(c, d) >= min(a, b):
            return False
        return orient2d(pc, pd, pa) * orient2d(pc, pd, pb) < 0

    def legalize(self, stack):
        stack = list(stack)
        while stack:
            a, b = stack.pop()
            if _key(a, b) in self.constrained:
                continue
            c = self.opp.get((a, b))
            d = self.opp.get((b, a))
            if c is None or d is None:
                continue
            if self.should_flip(a, b, c, d):
                self.flip_budget -= 1
                if self.flip_budget < 0:
                    raise DegenerateInputError("edge legalisation did not converge")
                self.flip(a, b)
                stack.extend([(a, d), (d, b), (b, c), (c, a)])

    def suspicious_edges(self):
        """Interior edges whose in-circle test is positive or within tolerance."""
        pairs = [(a, b) for (a, b) in self.opp if a < b and (b, a) in self.opp]
        if not pairs:
            return []
        ids = np.array(pairs, dtype=np.int64)
        c = np.array([self.opp[(a, b)] for a, b in pairs], dtype=np.int64)
        d = np.array([self.opp[(b, a)] for a, b in pairs], dtype=np.int64)
        ordered = sorted(self.pos)
        index = {v: k for k, v in enumerate(ordered)}
        xy = np.array([self.pos[v] for v in ordered], dtype=np.float64)
        ix = np.vectorize(index.__getitem__, otypes=[np.int64])
        pa, pb = xy[ix(ids[:, 0])], xy[ix(ids[:, 1])]
        pc, pd = xy[ix(c)], xy[ix(d)]
        ad = pa - pd
        bd = pb - pd
        cd = pc - pd
        a2 = (ad ** 2).sum(1)
        b2 = (bd ** 2).sum(1)
        c2 = (cd ** 2).sum(1)
        det = (
            ad[:, 0] * (bd[:, 1] * c2 - b2 * cd[:, 1])
            - ad[:, 1] * (bd[:, 0] * c2 - b2 * cd[:, 0])
            + a2 * (bd[:, 0] * cd[:, 1] - bd[:, 1] * cd[:, 0])
        )
        tol = EPS * np.maximum(1.0, (a2 + b2 + c2) ** 2)
        flag = det >= -tol
        return [pairs[k] for k in np.flatnonzero(flag)]

    def crossing_edges(self, a, b):
        pa, pb = self.pos[a], self.pos[b]
        pairs = [(u, v) for (u, v) in self.opp if u < v or (v, u) not in self.opp]
        if not pairs:
            return []
        arr = np.array(pairs, dtype=np.int64)
        pu = np.array([self.pos[u] for u, _ in pairs])
        pv = np.array([self.pos[v] for _, v in pairs])
        A = np.broadcast_to(np.asarray(pa, dtype=np.float64), pu.shape)
        B = np.broadcast_to(np.asarray(pb, dtype=np.float64), pu.shape)
        d1 = orient2d_many(A, B, pu)
        d2 = orient2d_many(A, B, pv)
        d3 = orient2d_many(pu, pv, A)
        d4 = orient2d_many(pu, pv, B)
        hit = (((d1 > EPS) & (d2 < -EPS)) | ((d1 < -EPS) & (d2 > EPS))) & (
            ((d3 > EPS) & (d4 < -EPS)) | ((d3 < -EPS) & (d4 > EPS))
        )
        return [tuple(map(int, arr[k])) for k in np.flatnonzero(hit)]

    def insert_segment(self, a, b):
        if (a, b) in self.opp or (b, a) in self.opp:
            self.constrained.add(_key(a, b))
            return
        pa, pb = self.pos[a], self.pos[b]
        for v, p in self.pos.items():
            if v != a and v != b and point_on_open_segment(p, pa, pb):
                raise ConstraintConflictError(
                    f"vertex {v} lies on forced segment ({a}, {b})"
                )
        crossing = self.crossing_edges(a, b)
        for u, v in crossing:
            if _key(u, v) in self.constrained:
                raise ConstraintConflictError(
                    f"forced segment ({a}, {b}) crosses forced segment ({u}, {v})"
                )
        queue = deque(crossing)
        created = []
        stall = 0
        while queue:
            u, v = queue.popleft()
            c = self.opp[(u, v)]
            d = self.opp[(v, u)]
            pc, pd = self.pos[c], self.pos[d]
            convex = (orient2d(pc, pd, self.pos[u]) * orient2d(pc, pd, self.pos[v]) < 0
                      and abs(orient2d(pc, pd, self.pos[u])) > EPS
                      and abs(orient2d(pc, pd, self.pos[v])) > EPS)
            if not convex:
                queue.append((u, v))
                stall += 1
                if stall > 4 * len(queue) + 16:
                    raise ConstraintConflictError(f"could not insert forced segment ({a}, {b})")
                continue
            stall = 0
            self.flip(u, v)
            if {c, d} == {a, b}:
                continue
            sa, sb = orient2d(pa, pb, pc), orient2d(pa, pb, pd)
            if (sa > EPS and sb < -EPS) or (sa < -EPS and sb > EPS):
                # still crosses a-b: the new diagonal c-d stays queued
                queue.append((c, d))
            else:
                created.append((c, d))
        self.constrained.add(_key(a, b))
        self.legalize(created)


def _base_mesh(points: Mapping[int, Point]) -> _Mesh:
    ids = sorted(points)
    if len(ids) < 3:
        raise DegenerateInputError(f"triangulation needs at least 3 points, got {len(ids)}")
    xy = np.array([points[i] for i in ids], dtype=np.float64)
    if len({(float(x), float(y)) for x, y in xy}) != len(ids):
        raise DegenerateInputError("duplicate point positions")
    span = xy - xy[0]
    if np.linalg.matrix_rank(span, tol=1e-12 * max(1.0, np.abs(span).max())) < 2:
        raise DegenerateInputError("all points are collinear")
    try:
        qh = _Qhull(xy)
    except Exception as exc:  # Qhull raises its own error type for flat input
        raise DegenerateInputError(f"triangulation failed: {exc}") from None
    pos = {i: (float(points[i][0]), float(points[i][1])) for i in ids}
    mesh = _Mesh(pos)
    for s in qh.simplices:
        a, b, c = (ids[k] for k in s)
        o = orient2d(pos[a], pos[b], pos[c])
        if o == 0:
            raise DegenerateInputError("triangulation produced a flat triangle")
        if o < 0:
            b, c = c, b
        mesh.add(a, b, c)
    mesh.flip_budget = 50 * len(ids) * len(ids) + 1000
    mesh.legalize(mesh.suspicious_edges())
    return mesh


def delaunay(points: Mapping[int, Point]) -> TriangulationGraph:
    """Delaunay triangulation of ``points`` (id -> (x, y))."""
    mesh = _base_mesh(points)
    return TriangulationGraph(mesh.pos, mesh.opp)


def constrained_delaunay(points: Mapping[int, Point], forced_segments: Iterable[tuple[int, int]]) -> TriangulationGraph:
    """Constrained Delaunay triangulation containing every forced segment."""
    segs = []
    seen = set()
    for a, b in forced_segments:
        if a == b:
            raise ConstraintConflictError(f"degenerate forced segment ({a}, {b})")
        if a not in points or b not in points:
            raise ConstraintConflictError(f"forced segment ({a}, {b}) references an unknown point")
        k = _key(a, b)
        if k not in seen:
            seen.add(k)
            segs.append(k)
    mesh = _base_mesh(points)
    for a, b in segs:
        mesh.insert_segment(a, b)
    return TriangulationGraph(mesh.pos, mesh.opp, mesh.constrained)


def hull_vertex_count(graph: TriangulationGraph) -> int:
    """Number of vertices on the outer boundary of the triangulation."""
    boundary = {a for (a, b) in graph._opp if (b, a) not in graph._opp}
    return len(boundary)
