"""Geometric gatekeeping for candidate matching triangles."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .core import KeyPointSet, Seed
from .errors import ContractViolationError
from .geom import EPS, SideClass, TriangulationGraph, affine_from_triangles, classify_vertex_vs_hull_side
from .geom.polygon import signed_area
from .geom.predicates import orient2d_many

COHERENCE_T = 10.0
COHERENCE_S = 0.5
COHERENCE_THRESHOLD = 0.7


def normalized_coherence(median_error):
    return expit(-(np.asarray(median_error, dtype=np.float64) - COHERENCE_T) * COHERENCE_S)


def coherence_error_limit(threshold: float = COHERENCE_THRESHOLD) -> float:
    """Largest median error that still passes: t + ln(1/thr - 1) / s."""
    return COHERENCE_T + math.log(1.0 / threshold - 1.0) / COHERENCE_S


def lower_median(values) -> float:
    v = sorted(values)
    return float(v[(len(v) - 1) // 2])


@dataclass(frozen=True)
class CoherenceReport:
    errors: tuple[float, ...]
    median: float
    normalized: float
    accepted: bool


def _coherence_report(errors, threshold) -> CoherenceReport:
    if len(errors) == 0:
        return CoherenceReport((), 0.0, 1.0, True)
    med = lower_median(errors)
    e_hat = float(normalized_coherence(med))
    return CoherenceReport(tuple(float(e) for e in errors), med, e_hat, e_hat >= threshold)


def coherence_from_errors(errors: Sequence[float], threshold: float = COHERENCE_THRESHOLD) -> CoherenceReport:
    return _coherence_report(list(errors), threshold)


def _shared_side(hull_T, template_pts):
    index = {(float(x), float(y)): k for k, (x, y) in enumerate(hull_T)}
    hits = [(index.get((float(p[0]), float(p[1]))), n) for n, p in enumerate(template_pts)]
    on_hull = [(k, n) for k, n in hits if k is not None]
    n_hull = len(hull_T)
    if len(on_hull) == 2:
        (k1, n1), (k2, n2) = on_hull
        if (k1 + 1) % n_hull == k2:
            return (k1, k2), (n1, n2)
        if (k2 + 1) % n_hull == k1:
            return (k2, k1), (n2, n1)
    raise ContractViolationError("candidate triangle does not share exactly one side with the seed hull")


def non_intersection_check(seed_hull_T, seed_hull_S, cand) -> bool:
    """Accept only when the candidate's new vertex lies beyond the shared side in both images.

    ``seed_hull_S`` lists the scene correspondents of ``seed_hull_T``'s
    vertices in the same order, so side k of one is side k of the other.
    """
    t_pts = [p.xy for p in cand.template_points]
    s_pts = [p.xy for p in cand.scene_points]
    (k1, k2), (n1, n2) = _shared_side(seed_hull_T, t_pts)
    third = ({0, 1, 2} - {n1, n2}).pop()
    in_t = classify_vertex_vs_hull_side(seed_hull_T, (k1, k2), t_pts[third])
    if in_t is not SideClass.OUTER_HALFPLANE:
        return False
    in_s = classify_vertex_vs_hull_side(seed_hull_S, (k1, k2), s_pts[third])
    return in_s is SideClass.OUTER_HALFPLANE


def outer_mask(a, b, c, winding: float) -> np.ndarray:
    """Vectorised OUTER_HALFPLANE test of points ``c`` (k, 2) against side a->b of a polygon."""
    c = np.asarray(c, dtype=np.float64).reshape(-1, 2)
    a = np.broadcast_to(np.asarray(a, dtype=np.float64), c.shape)
    b = np.broadcast_to(np.asarray(b, dtype=np.float64), c.shape)
    return orient2d_many(a, b, c) * winding < -EPS


def polygon_winding(poly) -> float:
    return 1.0 if signed_area(poly) >= 0 else -1.0


def local_coherence_check(seed: Seed, cand, tri_T: TriangulationGraph, scene: KeyPointSet,
                          threshold: float = COHERENCE_THRESHOLD) -> CoherenceReport:
    """Median back-projection error of the seed's neighbours under the candidate's affine map."""
    t_ids = [p.id for p in cand.template_points]
    src = [p.xy for p in cand.template_points]
    dst = [p.xy for p in cand.scene_points]
    affine = affine_from_triangles(src, dst)
    seed_map = seed.scene_of()
    side = {i for i in t_ids if i in seed_map}
    near = set()
    for i in t_ids:
        near |= tri_T.neighbors(i)
    g_t = sorted(i for i in near if i in seed_map and i not in side)
    if not g_t:
        return _coherence_report([], threshold)
    pts_t = np.array([tri_T.vertices[i] for i in g_t])
    pts_s = np.array([scene.position(seed_map[i]) for i in g_t])
    errors = np.linalg.norm(pts_s - affine.apply(pts_t), axis=1)
    return _coherence_report(list(errors), threshold)


def batch_coherence(affines: np.ndarray, owner: np.ndarray, g_t: np.ndarray, g_s: np.ndarray,
                    n_candidates: int, threshold: float = COHERENCE_THRESHOLD):
    """Normalised coherence for many candidates at once.

    ``affines`` is (k, 2, 3); rows of ``g_t``/``g_s`` belong to candidate
    ``owner[row]``. Candidates owning no rows get 1.0 (vacuous acceptance).
    Returns (normalized (k,), accepted (k,)).
    """
    e_hat = np.ones(n_candidates)
    if len(owner):
        mapped = np.einsum("kij,kj->ki", affines[owner, :, :2], g_t) + affines[owner, :, 2]
        err = np.linalg.norm(g_s - mapped, axis=1)
        order = np.lexsort((err, owner))
        own_sorted = owner[order]
        counts = np.bincount(owner, minlength=n_candidates)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        has = counts > 0
        pick = starts[has] + (counts[has] - 1) // 2
        assert np.all(own_sorted[pick] == np.flatnonzero(has))
        e_hat[has] = normalized_coherence(err[order][pick])
    return e_hat, e_hat >= threshold

