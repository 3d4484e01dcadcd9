"""Consistency scores between the template and scene projections of a matching triangle.

Each score has a scalar form working on a ``TriangleProjection`` and a batch
form working on stacked arrays, which the growth engine uses to score
thousands of candidate triangles per step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import KeyPoint
from .errors import DegeneratePairError, DegenerateTriangleError, ValidationError

DV_MU = 400.0
DV_SLOPE = 0.015
POSITION_SIGMA = 0.2
ORIENTATION_SIGMA = 1.75
SCALE_RATIO_SIGMA = 10.0
CCS_MU = 2.0
CCS_SIGMA = 0.2
RCS_MU_CORRECTED = math.sqrt(2.0)
RCS_MU_PAPER = 2.0
RCS_SIGMA = 0.2

# pairs (1,2), (2,3), (3,1) in zero-based form
PAIRS = ((0, 1), (1, 2), (2, 0))
_I = np.array([p[0] for p in PAIRS])
_J = np.array([p[1] for p in PAIRS])


def rcs_mu(mode: str) -> float:
    if mode == "corrected":
        return RCS_MU_CORRECTED
    if mode == "paper":
        return RCS_MU_PAPER
    raise ValidationError(f"unknown rcs mu mode {mode!r} (expected 'paper' or 'corrected')")


def _gauss(x, sigma, mu=0.0):
    return np.exp(-0.5 * ((np.asarray(x, dtype=np.float64) - mu) / sigma) ** 2)


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = np.asarray(a, dtype=np.float64)
    w = np.mod(a + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


@dataclass(frozen=True)
class TriangleProjection:
    template_points: tuple[KeyPoint, KeyPoint, KeyPoint]
    scene_points: tuple[KeyPoint, KeyPoint, KeyPoint]

    def __post_init__(self):
        if len(self.template_points) != 3 or len(self.scene_points) != 3:
            raise ValidationError("a triangle projection pairs exactly three keypoints per image")
        object.__setattr__(self, "template_points", tuple(self.template_points))
        object.__setattr__(self, "scene_points", tuple(self.scene_points))

    def arrays(self):
        """Batch-of-one arrays in the layout the ``*_batch`` functions expect."""
        t, s = self.template_points, self.scene_points
        return dict(
            t_xy=np.array([[[p.x, p.y] for p in t]]),
            s_xy=np.array([[[p.x, p.y] for p in s]]),
            t_theta=np.array([[p.orientation for p in t]]),
            s_theta=np.array([[p.orientation for p in s]]),
            t_scale=np.array([[p.scale for p in t]]),
            s_scale=np.array([[p.scale for p in s]]),
            dist=np.array([[float(np.linalg.norm(a.descriptor - b.descriptor)) for a, b in zip(t, s)]]),
        )


@dataclass(frozen=True)
class ScoreVector:
    dv: Optional[float] = None
    p: Optional[float] = None
    o: Optional[float] = None
    sr: Optional[float] = None

    def __post_init__(self):
        for name in ("dv", "p", "o", "sr"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValidationError(f"score component {name}={v} outside [0, 1]")


# -- batch forms -------------------------------------------------------------

def dv_from_distance(dist):
    return 1.0 / (1.0 + np.exp((np.asarray(dist, dtype=np.float64) - DV_MU) * DV_SLOPE))


def dv_batch(dist: np.ndarray) -> np.ndarray:
    return dv_from_distance(dist).mean(axis=-1)


def position_batch(t_xy: np.ndarray, s_xy: np.ndarray) -> np.ndarray:
    def normalized_sides(xy):
        sides = np.linalg.norm(xy[:, _J] - xy[:, _I], axis=-1)
        perim = sides.sum(axis=-1, keepdims=True)
        if np.any(perim <= 0):
            raise DegenerateTriangleError("triangle with zero perimeter")
        return sides / perim

    x = np.abs(normalized_sides(t_xy) - normalized_sides(s_xy)).sum(axis=-1)
    return _gauss(x, POSITION_SIGMA)


def _a_terms(xy, theta):
    d = xy[:, _J] - xy[:, _I]
    if np.any((d[..., 0] == 0) & (d[..., 1] == 0)):
        raise DegeneratePairError("coincident keypoints in a triangle")
    ti, tj = theta[:, _I], theta[:, _J]
    ang_ij = np.arctan2(d[..., 1], d[..., 0])
    ang_ji = np.arctan2(-d[..., 1], -d[..., 0])
    return wrap_angle(ti - tj), wrap_angle(ti - ang_ij), wrap_angle(tj - ang_ji)


def orientation_x(t_xy, s_xy, t_theta, s_theta) -> np.ndarray:
    """Mean over the three pairs of the summed a-term discrepancies."""
    at = _a_terms(t_xy, t_theta)
    as_ = _a_terms(s_xy, s_theta)
    x = sum(np.abs(wrap_angle(a - b)) for a, b in zip(at, as_))
    return x.mean(axis=-1)


def orientation_batch(t_xy, s_xy, t_theta, s_theta) -> np.ndarray:
    return _gauss(orientation_x(t_xy, s_xy, t_theta, s_theta), ORIENTATION_SIGMA)


def scale_ratio_x(t_scale, s_scale) -> np.ndarray:
    if np.any(t_scale <= 0) or np.any(s_scale <= 0):
        raise ValidationError("keypoint scales must be positive")
    r1t = t_scale[:, _I] / t_scale[:, _J]
    r1s = s_scale[:, _I] / s_scale[:, _J]
    x = np.abs(r1t - r1s) + np.abs(1.0 / r1t - 1.0 / r1s)
    return x.mean(axis=-1)


def scale_ratio_batch(t_scale, s_scale) -> np.ndarray:
    return _gauss(scale_ratio_x(t_scale, s_scale), SCALE_RATIO_SIGMA)


def ccs_batch(dv, p, o, sr) -> np.ndarray:
    n = np.sqrt(dv ** 2 + p ** 2 + o ** 2 + sr ** 2)
    return _gauss(n, CCS_SIGMA, CCS_MU)


def rcs_batch(dv, sr, mu: float = RCS_MU_CORRECTED) -> np.ndarray:
    return _gauss(np.sqrt(dv ** 2 + sr ** 2), RCS_SIGMA, mu)


def score_batch(t_xy, s_xy, t_theta, s_theta, t_scale, s_scale, dist, *, reduced=False,
                mu: float = RCS_MU_CORRECTED) -> np.ndarray:
    """Total score (ccs, or rcs when ``reduced``) for k stacked candidates."""
    dv = dv_batch(dist)
    sr = scale_ratio_batch(t_scale, s_scale)
    if reduced:
        return rcs_batch(dv, sr, mu)
    p = position_batch(t_xy, s_xy)
    o = orientation_batch(t_xy, s_xy, t_theta, s_theta)
    return ccs_batch(dv, p, o, sr)


# -- scalar forms ------------------------------------------------------------

def dv_pair(d_t, d_s) -> float:
    d_t = np.asarray(d_t, dtype=np.float64)
    d_s = np.asarray(d_s, dtype=np.float64)
    if d_t.shape != (128,) or d_s.shape != (128,):
        raise ValidationError("descriptors must have length 128")
    return float(dv_from_distance(np.linalg.norm(d_t - d_s)))


def dv_score(t: TriangleProjection) -> float:
    return float(dv_batch(t.arrays()["dist"])[0])


def position_score(t: TriangleProjection) -> float:
    a = t.arrays()
    return float(position_batch(a["t_xy"], a["s_xy"])[0])


def orientation_score(t: TriangleProjection) -> float:
    a = t.arrays()
    return float(orientation_batch(a["t_xy"], a["s_xy"], a["t_theta"], a["s_theta"])[0])


def scale_ratio_score(t: TriangleProjection) -> float:
    a = t.arrays()
    return float(scale_ratio_batch(a["t_scale"], a["s_scale"])[0])


def score_vector(t: TriangleProjection) -> ScoreVector:
    return ScoreVector(dv_score(t), position_score(t), orientation_score(t), scale_ratio_score(t))


def ccs(sv: ScoreVector) -> float:
    if None in (sv.dv, sv.p, sv.o, sv.sr):
        raise ValidationError("ccs needs all four score components")
    return float(ccs_batch(np.float64(sv.dv), np.float64(sv.p), np.float64(sv.o), np.float64(sv.sr)))


def rcs(sv: ScoreVector, mu: float = RCS_MU_CORRECTED) -> float:
    if sv.dv is None or sv.sr is None:
        raise ValidationError("rcs needs the dv and sr components")
    return float(rcs_batch(np.float64(sv.dv), np.float64(sv.sr), mu))


def gaussian_score(x: float, sigma: float) -> float:
    """exp(-x^2 / (2 sigma^2)); exposed for the closed-form checks."""
    return float(_gauss(x, sigma))


def stack_projections(projections: Sequence[TriangleProjection]) -> dict:
    arrays = [p.arrays() for p in projections]
    return {k: np.concatenate([a[k] for a in arrays]) for k in arrays[0]}
