"""Orientation and in-circle predicates in double precision.

Values within ``EPS`` of zero are treated as exactly zero (collinear or
cocircular). Pixel-scale inputs keep the rounding error far below any
configuration the detector cares about.
"""
import numpy as np

EPS = 1e-9


def orient2d(a, b, c) -> float:
    """Twice the signed area of triangle abc; positive when counter-clockwise."""
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def orientation_sign(a, b, c, eps: float = EPS) -> int:
    d = orient2d(a, b, c)
    if d > eps:
        return 1
    if d < -eps:
        return -1
    return 0


def incircle(a, b, c, d) -> float:
    """Positive when d lies inside the circumcircle of CCW triangle abc."""
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]
    ad = adx * adx + ady * ady
    bd = bdx * bdx + bdy * bdy
    cd = cdx * cdx + cdy * cdy
    return (
        adx * (bdy * cd - bd * cdy)
        - ady * (bdx * cd - bd * cdx)
        + ad * (bdx * cdy - bdy * cdx)
    )


def orient2d_many(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Vectorised ``orient2d`` over (..., 2) arrays."""
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def segments_cross(p1, p2, q1, q2, eps: float = EPS) -> bool:
    """True when the open segments p1p2 and q1q2 cross at a single interior point."""
    d1 = orientation_sign(q1, q2, p1, eps)
    d2 = orientation_sign(q1, q2, p2, eps)
    d3 = orientation_sign(p1, p2, q1, eps)
    d4 = orientation_sign(p1, p2, q2, eps)
    return d1 * d2 < 0 and d3 * d4 < 0


def point_on_open_segment(p, a, b, eps: float = EPS) -> bool:
    if orientation_sign(a, b, p, eps) != 0:
        return False
    dot = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])
    length2 = (b[0] - a[0]) ** 2 + (b[1] - a[1]) ** 2
    return eps < dot < length2 - eps
