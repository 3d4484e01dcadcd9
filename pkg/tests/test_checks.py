import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trigrow.checks import (
    batch_coherence,
    coherence_error_limit,
    coherence_from_errors,
    local_coherence_check,
    non_intersection_check,
    normalized_coherence,
)
from trigrow.core import KeyPoint, KeyPointSet, Match, Seed
from trigrow.errors import ContractViolationError, DegenerateTriangleError
from trigrow.geom import affine_batch, delaunay
from trigrow.scores import TriangleProjection


def kp(i, x, y):
    return KeyPoint(i, x, y, 1.0, 0.0, np.zeros(128))


def proj(t_xy, s_xy, ids=(0, 1, 2)):
    return TriangleProjection(
        tuple(kp(i, *p) for i, p in zip(ids, t_xy)),
        tuple(kp(i, *p) for i, p in zip(ids, s_xy)),
    )


SQUARE = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)]


# -- coherence sigmoid -------------------------------------------------------

def test_sigmoid_midpoint_rejects():
    r = coherence_from_errors([10.0])
    assert r.normalized == pytest.approx(0.5, abs=1e-15)
    assert not r.accepted


def test_zero_error_value():
    r = coherence_from_errors([0.0])
    assert r.normalized == pytest.approx(1 / (1 + math.exp(-5)), abs=1e-12)
    assert r.normalized == pytest.approx(0.993307, abs=1e-6)
    assert r.accepted


def test_three_errors_median():
    r = coherence_from_errors([4.0, 0.0, 2.0])
    assert r.median == 2.0
    assert r.normalized == pytest.approx(0.982014, abs=1e-6)
    assert r.accepted


def test_even_count_uses_lower_median():
    assert coherence_from_errors([1.0, 3.0, 20.0, 40.0]).median == 3.0


def test_empty_neighbourhood_is_vacuous():
    r = coherence_from_errors([])
    assert r.accepted and r.normalized == 1.0


def test_acceptance_boundary_by_bisection():
    limit = 10 + 2 * math.log(3 / 7)
    assert coherence_error_limit() == pytest.approx(limit, abs=1e-12)
    lo, hi = 0.0, 20.0
    for _ in range(100):
        mid = (lo + hi) / 2
        if coherence_from_errors([mid]).accepted:
            lo = mid
        else:
            hi = mid
    assert abs(lo - limit) < 1e-6
    assert abs(8.3054 - lo) < 1e-4


def test_huge_error_does_not_warn():
    with np.errstate(all="raise"):
        assert float(normalized_coherence(1e6)) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 50), min_size=1, max_size=9), st.integers(0, 8), st.floats(0, 1))
def test_acceptance_monotone_in_errors(errors, idx, factor):
    idx %= len(errors)
    before = coherence_from_errors(errors).accepted
    lowered = list(errors)
    lowered[idx] *= factor
    after = coherence_from_errors(lowered).accepted
    assert not (before and not after)


# -- non-intersection ----------------------------------------------------------

def test_outside_in_both_is_accepted():
    c = proj([(0, 0), (10, 0), (5, -4)], [(0, 0), (10, 0), (5, -4)])
    assert non_intersection_check(SQUARE, SQUARE, c)


def test_inside_template_is_rejected():
    c = proj([(0, 0), (10, 0), (5, 4)], [(0, 0), (10, 0), (5, -4)])
    assert not non_intersection_check(SQUARE, SQUARE, c)


def test_inside_scene_is_rejected():
    c = proj([(0, 0), (10, 0), (5, -4)], [(0, 0), (10, 0), (5, 4)])
    assert not non_intersection_check(SQUARE, SQUARE, c)


def test_collinear_is_rejected():
    c = proj([(0, 0), (10, 0), (15, 0)], [(0, 0), (10, 0), (5, -4)])
    assert not non_intersection_check(SQUARE, SQUARE, c)


def test_shared_side_order_does_not_matter():
    c = proj([(10, 0), (5, -4), (0, 0)], [(10, 0), (5, -4), (0, 0)])
    assert non_intersection_check(SQUARE, SQUARE, c)


def test_mirrored_scene_winding():
    scene = [(x, -y) for x, y in SQUARE]  # clockwise correspondent
    c = proj([(0, 0), (10, 0), (5, -4)], [(0, 0), (10, 0), (5, 4)])
    assert non_intersection_check(SQUARE, scene, c)


def test_no_shared_side_is_contract_violation():
    c = proj([(0, 0), (10, 10), (5, -4)], [(0, 0), (10, 10), (5, -4)])
    with pytest.raises(ContractViolationError):
        non_intersection_check(SQUARE, SQUARE, c)
    c = proj([(20, 0), (30, 0), (25, -4)], [(20, 0), (30, 0), (25, -4)])
    with pytest.raises(ContractViolationError):
        non_intersection_check(SQUARE, SQUARE, c)


@settings(max_examples=100, deadline=None)
@given(st.floats(-math.pi, math.pi), st.floats(-100, 100), st.floats(-100, 100),
       st.floats(-20, 20), st.floats(-20, 20))
def test_non_intersection_rigid_invariance(angle, tx, ty, px, py):
    c_, s_ = math.cos(angle), math.sin(angle)

    def move(pts):
        return [(c_ * x - s_ * y + tx, s_ * x + c_ * y + ty) for x, y in pts]

    tri_t = [(0, 0), (10, 0), (px, py)]
    tri_s = [(0, 0), (10, 0), (px * 0.9, py * 1.1)]
    if abs(py) < 1e-3:
        return  # too close to the line to survive rounding under rotation
    base = non_intersection_check(SQUARE, SQUARE, proj(tri_t, tri_s))
    hull = move(SQUARE)
    moved = non_intersection_check(hull, hull, proj(move(tri_t), move(tri_s)))
    assert base == moved


# -- local coherence ------------------------------------------------------------

def _grid_scene(transform):
    pts = {i: (float(x), float(y)) for i, (x, y) in enumerate((x, y) for y in range(0, 40, 10)
                                                              for x in range(0, 40, 10))}
    t_set = KeyPointSet("T", [kp(i, *p) for i, p in pts.items()])
    s_set = KeyPointSet("S", [kp(i, *transform(p)) for i, p in pts.items()])
    return pts, t_set, s_set


def test_affine_instance_gives_zero_error():
    A = np.array([[1.2, 0.3], [-0.2, 0.9]])
    pts, t_set, s_set = _grid_scene(lambda p: tuple(A @ np.array(p) + [5, 7]))
    tri = delaunay(pts)
    seed = Seed(tuple(Match(i, i, 0.0) for i in (0, 1, 4, 5)))
    cand = TriangleProjection(tuple(t_set.get(i) for i in (1, 5, 2)), tuple(s_set.get(i) for i in (1, 5, 2)))
    r = local_coherence_check(seed, cand, tri, s_set)
    assert len(r.errors) >= 1
    assert max(r.errors) < 1e-9
    assert r.accepted


def test_shifted_neighbour_is_rejected():
    def bend(p):
        return (p[0], p[1]) if p[0] > 0 else (p[0] - 30.0, p[1])

    pts, t_set, s_set = _grid_scene(bend)
    tri = delaunay(pts)
    seed = Seed(tuple(Match(i, i, 0.0) for i in (0, 1, 4, 5)))
    cand = TriangleProjection(tuple(t_set.get(i) for i in (1, 5, 2)), tuple(s_set.get(i) for i in (1, 5, 2)))
    r = local_coherence_check(seed, cand, tri, s_set)
    assert r.median == pytest.approx(30.0)
    assert not r.accepted


def test_degenerate_candidate_raises():
    pts, t_set, s_set = _grid_scene(lambda p: p)
    tri = delaunay(pts)
    seed = Seed(tuple(Match(i, i, 0.0) for i in (0, 1, 4)))
    cand = TriangleProjection(tuple(t_set.get(i) for i in (0, 1, 2)), tuple(s_set.get(i) for i in (0, 1, 2)))
    with pytest.raises(DegenerateTriangleError):
        local_coherence_check(seed, cand, tri, s_set)


def test_batch_matches_scalar():
    rng = np.random.default_rng(3)
    k = 6
    src = rng.uniform(0, 100, (k, 3, 2))
    dst = src + rng.normal(0, 3, (k, 3, 2))
    aff = affine_batch(src, dst)
    owner = np.array([0, 0, 0, 2, 2, 3, 5, 5, 5, 5])
    g_t = rng.uniform(0, 100, (len(owner), 2))
    g_s = g_t + rng.normal(0, 6, (len(owner), 2))
    e_hat, ok = batch_coherence(aff, owner, g_t, g_s, k)
    for c in range(k):
        rows = owner == c
        mapped = g_t[rows] @ aff[c, :, :2].T + aff[c, :, 2]
        ref = coherence_from_errors(np.linalg.norm(g_s[rows] - mapped, axis=1))
        assert e_hat[c] == pytest.approx(ref.normalized, abs=1e-12)
        assert ok[c] == ref.accepted
    assert e_hat[1] == 1.0 and e_hat[4] == 1.0
