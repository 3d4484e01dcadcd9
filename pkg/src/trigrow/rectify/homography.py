"""Normalised DLT, seeded RANSAC and the greedy multi-instance homography baseline."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..core import Detection, KeyPointSet, Match, Seed, match_sets
from ..errors import DegenerateConfigurationError, DegenerateInputError, ValidationError
from ..geom import Homography, clip_polygon, convex_hull

log = logging.getLogger(__name__)


def _normalizer(p: np.ndarray) -> np.ndarray:
    c = p.mean(axis=0)
    d = np.sqrt(((p - c) ** 2).sum(axis=1)).mean()
    if d <= 0:
        raise DegenerateConfigurationError("all points coincide")
    s = np.sqrt(2.0) / d
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def _dlt_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    n = len(p)
    x, y = p[:, 0], p[:, 1]
    u, v = q[:, 0], q[:, 1]
    z, o = np.zeros(n), np.ones(n)
    a = np.empty((2 * n, 9))
    a[0::2] = np.column_stack([-x, -y, -o, z, z, z, u * x, u * y, u])
    a[1::2] = np.column_stack([z, z, z, -x, -y, -o, v * x, v * y, v])
    return a


def _apply_h(h: np.ndarray, p: np.ndarray) -> np.ndarray:
    q = p @ h[:, :2].T + h[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        return q[:, :2] / q[:, 2:3]


def _has_collinear_triple(p: np.ndarray, tol: float) -> bool:
    n = len(p)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                a, b, c = p[i], p[j], p[k]
                if abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])) <= tol:
                    return True
    return False


def homography_dlt(src, dst) -> Homography:
    """Least-squares homography from >= 4 correspondences (Hartley-normalised DLT)."""
    p = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    q = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if len(p) != len(q):
        raise ValidationError("point lists differ in length")
    if len(p) < 4:
        raise DegenerateConfigurationError(f"homography needs at least 4 pairs, got {len(p)}")
    if len(p) == 4 and (_has_collinear_triple(p, 1e-9) or _has_collinear_triple(q, 1e-9)):
        raise DegenerateConfigurationError("three of the four points are collinear")
    tp, tq = _normalizer(p), _normalizer(q)
    pn = p @ tp[:, :2].T + tp[:, 2]
    qn = q @ tq[:, :2].T + tq[:, 2]
    _, sv, vt = np.linalg.svd(_dlt_rows(pn, qn))
    if len(sv) >= 8 and sv[7] <= 1e-12 * sv[0]:
        raise DegenerateConfigurationError("degenerate point configuration")
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(tq) @ hn @ tp
    if abs(h[2, 2]) < 1e-15:
        raise DegenerateConfigurationError("homography maps the origin to infinity")
    try:
        return Homography(h)
    except ValidationError as exc:
        raise DegenerateConfigurationError(str(exc)) from None


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 2000
    inlier_threshold: float = 3.0
    min_inliers: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if not self.inlier_threshold > 0:
            raise ValidationError("inlier_threshold must be positive")
        if self.min_inliers < 4:
            raise ValidationError("min_inliers must be >= 4")


def _batch_minimal(p: np.ndarray, q: np.ndarray, samples: np.ndarray) -> np.ndarray:
    """Homographies from many 4-point samples at once; (k, 3, 3), NaN where degenerate."""
    k = len(samples)
    P = p[samples]  # (k, 4, 2)
    Q = q[samples]
    x, y = P[..., 0], P[..., 1]
    u, v = Q[..., 0], Q[..., 1]
    z, o = np.zeros_like(x), np.ones_like(x)
    A = np.empty((k, 8, 9))
    A[:, 0::2] = np.stack([-x, -y, -o, z, z, z, u * x, u * y, u], axis=-1)
    A[:, 1::2] = np.stack([z, z, z, -x, -y, -o, v * x, v * y, v], axis=-1)
    _, sv, vt = np.linalg.svd(A)
    H = vt[:, -1].reshape(k, 3, 3)
    bad = sv[:, 7] <= 1e-10 * sv[:, 0]
    H[bad] = np.nan
    return H


def _reprojection_errors(H: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """(k, n) distances between H_k(p) and q."""
    ph = np.concatenate([p, np.ones((len(p), 1))], axis=1)
    m = np.einsum("kij,nj->kni", H, ph)
    with np.errstate(divide="ignore", invalid="ignore"):
        proj = m[..., :2] / m[..., 2:3]
        err = np.sqrt(((proj - q[None]) ** 2).sum(axis=2))
    return np.where(np.isfinite(err), err, np.inf)


def ransac_homography(matches: Sequence[Match], template: KeyPointSet, scene: KeyPointSet,
                      cfg: RansacConfig = RansacConfig()):
    """Best-consensus homography from template to scene, refit on its inliers.

    Returns (Homography, inlier matches) or None.
    """
    matches = list(matches)
    if len(matches) < 4:
        return None
    p = np.array([template.position(m.template_id) for m in matches])
    q = np.array([scene.position(m.scene_id) for m in matches])
    n = len(matches)
    rng = np.random.default_rng(cfg.seed)
    samples = np.array([rng.choice(n, 4, replace=False) for _ in range(cfg.iterations)])
    best_count, best_mask = -1, None
    batch = 500
    for start in range(0, cfg.iterations, batch):
        H = _batch_minimal(p, q, samples[start:start + batch])
        err = _reprojection_errors(H, p, q)
        inl = err < cfg.inlier_threshold
        counts = inl.sum(axis=1)
        k = int(np.argmax(counts))  # first maximum keeps the earliest sample
        if counts[k] > best_count:
            best_count, best_mask = int(counts[k]), inl[k]
    if best_count < cfg.min_inliers:
        return None
    # refit on the consensus set, then re-collect inliers once
    mask = best_mask
    for _ in range(2):
        try:
            H = homography_dlt(p[mask], q[mask])
        except DegenerateConfigurationError:
            return None
        err = _reprojection_errors(H.matrix[None], p, q)[0]
        new_mask = err < cfg.inlier_threshold
        if new_mask.sum() < cfg.min_inliers:
            break
        mask = new_mask
    if mask.sum() < cfg.min_inliers:
        return None
    H = homography_dlt(p[mask], q[mask])
    return H, [m for m, keep in zip(matches, mask) if keep]


def template_frame(template: KeyPointSet, size: Optional[tuple[int, int]] = None):
    """Corner polygon of the template: its image frame if known, else the keypoint bbox."""
    if size is not None:
        w, h = size
        return [(0.0, 0.0), (float(w), 0.0), (float(w), float(h)), (0.0, float(h))]
    lo = template.xy.min(axis=0)
    hi = template.xy.max(axis=0)
    return [(lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])]


def baseline_detect(template: KeyPointSet, scene: KeyPointSet, cfg: RansacConfig = RansacConfig(),
                    matches: Optional[Sequence[Match]] = None, ratio_threshold: float = 0.8,
                    scene_size: Optional[tuple[int, int]] = None,
                    template_size: Optional[tuple[int, int]] = None) -> list[Detection]:
    """Greedy multi-instance RANSAC: fit, record, remove inliers, repeat."""
    if matches is None:
        if len(template) == 0 or len(scene) == 0:
            return []
        matches = match_sets(template, scene, ratio_threshold)
    remaining = sorted(set(matches))
    frame = template_frame(template, template_size)
    if scene_size is not None:
        w, h = scene_size
        bounds = [(0.0, 0.0), (float(w), 0.0), (float(w), float(h)), (0.0, float(h))]
    else:
        bounds = None
    out = []
    k = 0
    while len(remaining) >= cfg.min_inliers:
        found = ransac_homography(remaining, template, scene, RansacConfig(
            cfg.iterations, cfg.inlier_threshold, cfg.min_inliers, cfg.seed + k))
        if found is None:
            break
        H, inliers = found
        quad = [tuple(map(float, v)) for v in H.apply(np.array(frame))]
        try:
            hull = convex_hull(quad)
        except DegenerateInputError:
            hull = []
        if hull and bounds is not None:
            hull = clip_polygon(hull, bounds)
        t_hull = convex_hull(frame)
        try:
            seed = Seed(tuple(inliers), (f"ransac{k}",))
        except ValidationError:
            # ratio-test matches are injective on the scene side only; keep the best per template id
            best = {}
            for m in sorted(inliers, key=lambda m: (m.distance, m.scene_id)):
                best.setdefault(m.template_id, m)
            seed = Seed(tuple(best.values()), (f"ransac{k}",))
        if hull:
            out.append(Detection(seed, tuple(t_hull), tuple(hull), None))
        log.info("baseline instance %d: %d inliers", k, len(inliers))
        used = set(inliers)
        remaining = [m for m in remaining if m not in used]
        k += 1
    return out
