import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import ConvexHull

from trigrow.core import KeyPointSet
from trigrow.errors import (
    ConstraintConflictError,
    DegenerateInputError,
    DegenerateTriangleError,
    InfeasiblePartitionError,
)
from trigrow.geom import (
    SideClass,
    affine_from_triangles,
    boundary_ring,
    classify_vertex_vs_hull_side,
    constrained_delaunay,
    convex_hull,
    delaunay,
    kd_partition,
    polygons_intersect,
)


def random_points(rng, n, scale=1000.0):
    return {i: (float(x), float(y)) for i, (x, y) in enumerate(rng.uniform(0, scale, (n, 2)))}


def circumcircle(a, b, c):
    ax, ay = a
    bx, by = b
    cx, cy = c
    d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)) / d
    uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)) / d
    return (ux, uy), math.hypot(ax - ux, ay - uy)


def strictly_inside_circle(tri, pts, v):
    center, r = circumcircle(*(pts[i] for i in tri))
    return math.dist(center, pts[v]) < r * (1 - 1e-9)


def brute_force_delaunay_ok(graph, pts):
    for tri in graph.triangles:
        for v in pts:
            if v not in tri and strictly_inside_circle(tri, pts, v):
                return False
    return True


def _cross(p1, p2, q1, q2):
    def o(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return o(q1, q2, p1) * o(q1, q2, p2) < 0 and o(p1, p2, q1) * o(p1, p2, q2) < 0


def brute_force_cdt_ok(graph, pts):
    cons = [(pts[a], pts[b]) for a, b in graph.constrained_edges]
    for tri in graph.triangles:
        corners = [np.array(pts[i]) for i in tri]
        centroid = sum(corners) / 3
        samples = [centroid] + [0.9 * c + 0.1 * centroid for c in corners]
        for v in pts:
            if v in tri or not strictly_inside_circle(tri, pts, v):
                continue
            for s in samples:
                if not any(_cross(tuple(s), pts[v], a, b) for a, b in cons):
                    return False
    return True


def test_single_triangle():
    g = delaunay({0: (0, 0), 1: (1, 0), 2: (0, 1)})
    assert g.triangles == {(0, 1, 2)}
    assert len(g.edges) == 3


def test_unit_square_tie_break_picks_smallest_diagonal():
    g = delaunay({0: (0, 0), 1: (1, 0), 2: (1, 1), 3: (0, 1)})
    assert (0, 2) in g.edges and (1, 3) not in g.edges
    # relabelled so that the other diagonal holds id 0
    g = delaunay({3: (0, 0), 1: (1, 0), 2: (1, 1), 0: (0, 1)})
    assert (0, 1) in g.edges and (2, 3) not in g.edges


def test_cocircular_grid_is_deterministic():
    pts = {i: (float(i % 5), float(i // 5)) for i in range(25)}
    a = delaunay(pts)
    shuffled = dict(reversed(list(pts.items())))
    b = delaunay(shuffled)
    assert a.edges == b.edges
    assert len(a.triangles) == 2 * 25 - 2 - 16


@pytest.mark.parametrize("pts", [
    {0: (0, 0), 1: (1, 1)},
    {0: (0, 0), 1: (1, 1), 2: (2, 2), 3: (5, 5)},
])
def test_delaunay_degenerate_inputs(pts):
    with pytest.raises(DegenerateInputError):
        delaunay(pts)


@pytest.mark.parametrize("seed", range(10))
def test_delaunay_oracle_and_counts(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 120))
    pts = random_points(rng, n)
    g = delaunay(pts)
    assert brute_force_delaunay_ok(g, pts)
    h = len(ConvexHull(np.array(list(pts.values()))).vertices)
    assert len(g.edges) == 3 * n - 3 - h
    assert len(g.triangles) == 2 * n - 2 - h
    for a, b, c in g.triangles:
        assert {(min(a, b), max(a, b)), (min(b, c), max(b, c)), (min(a, c), max(a, c))} <= g.edges


def test_triangles_are_ccw():
    rng = np.random.default_rng(3)
    pts = random_points(rng, 60)
    for a, b, c in delaunay(pts).triangles:
        pa, pb, pc = pts[a], pts[b], pts[c]
        assert (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0]) > 0


def test_forced_diagonal_in_square():
    g = constrained_delaunay({0: (0, 0), 1: (1, 0), 2: (1, 1), 3: (0, 1)}, [(1, 3)])
    assert (1, 3) in g.edges and (1, 3) in g.constrained_edges


def test_no_constraints_matches_delaunay():
    rng = np.random.default_rng(11)
    pts = random_points(rng, 80)
    assert constrained_delaunay(pts, []).edges == delaunay(pts).edges


def _non_crossing_segments(rng, pts, count):
    ids = list(pts)
    chosen = []
    tries = 0
    while len(chosen) < count and tries < 1000:
        tries += 1
        a, b = (int(v) for v in rng.choice(ids, 2, replace=False))
        pa, pb = pts[a], pts[b]
        if any(_cross(pa, pb, pts[c], pts[d]) for c, d in chosen):
            continue
        chosen.append((a, b))
    return chosen


@pytest.mark.parametrize("seed", range(8))
def test_constrained_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    pts = random_points(rng, int(rng.integers(10, 90)))
    segs = _non_crossing_segments(rng, pts, int(rng.integers(1, 6)))
    g = constrained_delaunay(pts, segs)
    for a, b in segs:
        assert (min(a, b), max(a, b)) in g.edges
    assert brute_force_cdt_ok(g, pts)
    # still a triangulation of the same point set
    h = len(ConvexHull(np.array(list(pts.values()))).vertices)
    assert len(g.triangles) == 2 * len(pts) - 2 - h


def test_constrained_hull_ring():
    rng = np.random.default_rng(5)
    pts = random_points(rng, 70)
    inner = {i: p for i, p in pts.items() if 300 < p[0] < 700 and 300 < p[1] < 700}
    ring = boundary_ring(inner)
    sides = list(zip(ring, ring[1:] + ring[:1]))
    g = constrained_delaunay(pts, sides)
    for a, b in sides:
        assert g.has_edge(a, b)
    assert brute_force_cdt_ok(g, pts)


def test_crossing_constraints_conflict():
    pts = {0: (0, 0), 1: (2, 0), 2: (2, 2), 3: (0, 2), 4: (1, 3)}
    with pytest.raises(ConstraintConflictError):
        constrained_delaunay(pts, [(0, 2), (1, 3)])


def test_point_on_forced_segment_conflict():
    pts = {0: (0, 0), 1: (2, 0), 2: (1, 0), 3: (1, 1)}
    with pytest.raises(ConstraintConflictError):
        constrained_delaunay(pts, [(0, 1)])


def test_convex_hull_examples():
    hull = convex_hull([(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)])
    assert set(hull) == {(0, 0), (1, 0), (1, 1), (0, 1)}
    sq = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    hull = convex_hull(list(reversed(sq)))
    assert hull == sq


def test_convex_hull_degenerate():
    with pytest.raises(DegenerateInputError):
        convex_hull([(0, 0), (1, 1)])
    with pytest.raises(DegenerateInputError):
        convex_hull([(0, 0), (1, 1), (2, 2)])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 500), st.integers(0, 500)), min_size=3, max_size=200))
def test_convex_hull_contains_all(points):
    pts = [(float(x), float(y)) for x, y in points]
    try:
        hull = convex_hull(pts)
    except DegenerateInputError:
        arr = np.array(pts)
        assert np.linalg.matrix_rank(arr - arr[0]) < 2
        return
    assert set(hull) <= set(pts)
    n = len(hull)
    for p in pts:
        for k in range(n):
            a, b = hull[k], hull[(k + 1) % n]
            assert (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= -1e-9


def test_classify_examples():
    sq = [(0, 0), (1, 0), (1, 1), (0, 1)]
    side = ((0, 0), (1, 0))
    assert classify_vertex_vs_hull_side(sq, side, (0.5, -1)) is SideClass.OUTER_HALFPLANE
    assert classify_vertex_vs_hull_side(sq, side, (0.5, 0.5)) is SideClass.INNER_HALFPLANE
    assert classify_vertex_vs_hull_side(sq, side, (2, 0)) is SideClass.ON_LINE
    # side given by indices and a clockwise hull
    cw = list(reversed(sq))
    assert classify_vertex_vs_hull_side(cw, (2, 3), (0.5, -1)) is SideClass.OUTER_HALFPLANE


def test_polygons_intersect_examples():
    a = [(0, 0), (1, 0), (1, 1), (0, 1)]
    far = [(5, 5), (6, 5), (6, 6), (5, 6)]
    big = [(-1, -1), (3, -1), (3, 3), (-1, 3)]
    beside = [(1, 0), (2, 0), (2, 1), (1, 1)]
    assert not polygons_intersect(a, far)
    assert polygons_intersect(a, big) and polygons_intersect(big, a)
    assert not polygons_intersect(a, beside)


def test_affine_examples():
    src = [(0, 0), (4, 1), (1, 3)]
    m = affine_from_triangles(src, src)
    assert np.allclose(m.matrix, [[1, 0, 0], [0, 1, 0]])
    m = affine_from_triangles(src, [(x + 5, y + 7) for x, y in src])
    assert np.allclose(m.linear, np.eye(2)) and np.allclose(m.translation, [5, 7])
    with pytest.raises(DegenerateTriangleError):
        affine_from_triangles([(0, 0), (1, 1), (2, 2)], src)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_affine_interpolates(seed):
    rng = np.random.default_rng(seed)
    src = rng.uniform(0, 100, (3, 2))
    d1, d2 = src[1] - src[0], src[2] - src[0]
    area = abs(d1[0] * d2[1] - d1[1] * d2[0])
    if area < 1.0:
        return
    dst = rng.uniform(0, 100, (3, 2))
    m = affine_from_triangles(src, dst)
    assert np.abs(m.apply(src) - dst).max() < 1e-9
    back = m.inverse().compose(m)
    assert np.abs(back.apply(src) - src).max() < 1e-9


def _kps(xy):
    n = len(xy)
    return KeyPointSet.from_arrays("scene", range(n), xy, np.ones(n), np.zeros(n), np.zeros((n, 128)))


def test_kd_single_leaf_is_bbox():
    rng = np.random.default_rng(0)
    xy = rng.uniform(0, 100, (30, 2))
    part = kd_partition(_kps(xy), 1)
    assert part.leaves == ((xy[:, 0].min(), xy[:, 1].min(), xy[:, 0].max(), xy[:, 1].max()),)


def test_kd_collinear_singletons():
    xy = np.array([[0, 0], [1, 0], [2, 0], [3, 0], [4, 0]], dtype=float)
    part = kd_partition(_kps(xy), 5)
    assert sorted(part.counts()) == [1] * 5


def test_kd_infeasible():
    with pytest.raises(InfeasiblePartitionError):
        kd_partition(_kps(np.zeros((3, 2)) + np.arange(3)[:, None]), 4)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 400), st.integers(1, 12), st.integers(0, 10**6))
def test_kd_balanced_cover(n, leaves, seed):
    if leaves > n:
        return
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0, 1000, (n, 2))
    part = kd_partition(_kps(xy), leaves)
    counts = part.counts()
    assert len(counts) == leaves and min(counts) >= 1
    assert max(counts) - min(counts) <= 1
    assert sorted(i for m in part.members for i in m) == list(range(n))
    for rect, ids in zip(part.leaves, part.members):
        for i in ids:
            x, y = xy[i]
            assert rect[0] <= x <= rect[2] and rect[1] <= y <= rect[3]
    # leaves tile the bounding box
    total = sum((r[2] - r[0]) * (r[3] - r[1]) for r in part.leaves)
    b = part.bbox
    assert math.isclose(total, (b[2] - b[0]) * (b[3] - b[1]), rel_tol=1e-9, abs_tol=1e-9)
