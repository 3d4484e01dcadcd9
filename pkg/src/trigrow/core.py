"""Domain types and descriptor matching.

Keypoint sets keep their data in read-only numpy arrays so the geometric
code can work on whole sets at once; individual ``KeyPoint`` objects are
materialised on demand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ValidationError

DESCRIPTOR_SIZE = 128
TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Map an angle in radians to [0, 2*pi)."""
    t = math.fmod(float(theta), TWO_PI)
    if t < 0.0:
        t += TWO_PI
    # fmod of a tiny negative number rounds up to exactly 2*pi
    if t >= TWO_PI:
        t = 0.0
    return t


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class KeyPoint:
    id: int
    x: float
    y: float
    scale: float
    orientation: float
    descriptor: np.ndarray

    def __post_init__(self):
        if not self.scale > 0:
            raise ValidationError(f"keypoint {self.id}: scale must be positive, got {self.scale}")
        desc = np.asarray(self.descriptor, dtype=np.float64)
        if desc.shape != (DESCRIPTOR_SIZE,):
            raise ValidationError(
                f"keypoint {self.id}: descriptor length {desc.size} != {DESCRIPTOR_SIZE}"
            )
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "orientation", normalize_angle(self.orientation))
        object.__setattr__(self, "descriptor", _readonly(desc.copy()))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)

    def __eq__(self, other):
        if not isinstance(other, KeyPoint):
            return NotImplemented
        return (
            self.id == other.id
            and self.x == other.x
            and self.y == other.y
            and self.scale == other.scale
            and self.orientation == other.orientation
            and np.array_equal(self.descriptor, other.descriptor)
        )

    def __hash__(self):
        return hash((self.id, self.x, self.y, self.scale, self.orientation))


class KeyPointSet:
    """Ordered, immutable collection of keypoints from one image."""

    def __init__(self, image_tag: str, points: Iterable[KeyPoint]):
        pts = tuple(points)
        self.image_tag = image_tag
        self._points = pts
        n = len(pts)
        self.ids = _readonly(np.array([p.id for p in pts], dtype=np.int64))
        self.xy = _readonly(np.array([[p.x, p.y] for p in pts], dtype=np.float64).reshape(n, 2))
        self.scales = _readonly(np.array([p.scale for p in pts], dtype=np.float64))
        self.orientations = _readonly(np.array([p.orientation for p in pts], dtype=np.float64))
        self.descriptors = _readonly(
            np.array([p.descriptor for p in pts], dtype=np.float64).reshape(n, DESCRIPTOR_SIZE)
        )
        self._row = {}
        for i, p in enumerate(pts):
            if p.id in self._row:
                raise ValidationError(f"duplicate keypoint id {p.id} in {image_tag} set")
            self._row[p.id] = i

    @classmethod
    def from_arrays(cls, image_tag, ids, xy, scales, orientations, descriptors) -> "KeyPointSet":
        xy = np.asarray(xy, dtype=np.float64)
        pts = [
            KeyPoint(int(i), xy[k, 0], xy[k, 1], scales[k], orientations[k], descriptors[k])
            for k, i in enumerate(ids)
        ]
        return cls(image_tag, pts)

    def __len__(self) -> int:
        return len(self._points)

    def __iter__(self) -> Iterator[KeyPoint]:
        return iter(self._points)

    def __contains__(self, kp_id) -> bool:
        return kp_id in self._row

    def __eq__(self, other):
        if not isinstance(other, KeyPointSet):
            return NotImplemented
        return self.image_tag == other.image_tag and self._points == other._points

    def __repr__(self):
        return f"KeyPointSet({self.image_tag!r}, n={len(self)})"

    @property
    def points(self) -> tuple[KeyPoint, ...]:
        return self._points

    def get(self, kp_id: int) -> KeyPoint:
        try:
            return self._points[self._row[kp_id]]
        except KeyError:
            raise KeyError(f"no keypoint with id {kp_id} in {self.image_tag} set") from None

    def row(self, kp_id: int) -> int:
        return self._row[kp_id]

    def rows(self, kp_ids: Iterable[int]) -> np.ndarray:
        return np.fromiter((self._row[i] for i in kp_ids), dtype=np.int64)

    def position(self, kp_id: int) -> tuple[float, float]:
        r = self._row[kp_id]
        return (float(self.xy[r, 0]), float(self.xy[r, 1]))

    def subset(self, kp_ids: Iterable[int]) -> "KeyPointSet":
        keep = set(kp_ids)
        return KeyPointSet(self.image_tag, [p for p in self._points if p.id in keep])


@dataclass(frozen=True, order=True)
class Match:
    template_id: int
    scene_id: int
    distance: float = 0.0

    def __post_init__(self):
        if not self.distance >= 0:
            raise ValidationError(f"match distance must be non-negative, got {self.distance}")


def _sorted_matches(matches: Iterable[Match]) -> tuple[Match, ...]:
    return tuple(sorted(set(matches), key=lambda m: (m.template_id, m.scene_id)))


@dataclass(frozen=True)
class Seed:
    """Injective set of matches; a matching triangle when it has three."""

    matches: tuple[Match, ...]
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        ms = _sorted_matches(self.matches)
        object.__setattr__(self, "matches", ms)
        object.__setattr__(self, "provenance", tuple(self.provenance))
        t_ids = [m.template_id for m in ms]
        s_ids = [m.scene_id for m in ms]
        if len(set(t_ids)) != len(t_ids):
            raise ValidationError("seed is not injective: repeated template id")
        if len(set(s_ids)) != len(s_ids):
            raise ValidationError("seed is not injective: repeated scene id")
        if len(ms) < 3:
            raise ValidationError(f"a seed needs at least 3 matches, got {len(ms)}")

    def __len__(self) -> int:
        return len(self.matches)

    def __iter__(self):
        return iter(self.matches)

    @property
    def template_ids(self) -> tuple[int, ...]:
        return tuple(m.template_id for m in self.matches)

    @property
    def scene_ids(self) -> tuple[int, ...]:
        return tuple(m.scene_id for m in self.matches)

    def scene_of(self) -> dict[int, int]:
        return {m.template_id: m.scene_id for m in self.matches}

    def summed_distance(self) -> float:
        return math.fsum(m.distance for m in self.matches)

    def compatible(self, other: "Seed") -> bool:
        """True when the union of both match sets is still injective."""
        a = self.scene_of()
        inv = {s: t for t, s in a.items()}
        for m in other.matches:
            if m.template_id in a and a[m.template_id] != m.scene_id:
                return False
            if m.scene_id in inv and inv[m.scene_id] != m.template_id:
                return False
        return True

    def union(self, other: "Seed") -> "Seed":
        return Seed(self.matches + other.matches, self.provenance + other.provenance)

    def with_matches(self, extra: Iterable[Match]) -> "Seed":
        return Seed(self.matches + tuple(extra), self.provenance)


Point = tuple[float, float]


@dataclass(frozen=True)
class Detection:
    seed: Seed
    template_hull: tuple[Point, ...]
    scene_hull: tuple[Point, ...]
    score_j: Optional[float] = None

    def __post_init__(self):
        if self.score_j is not None and not 0 <= self.score_j <= 255:
            raise ValidationError(f"score_j out of [0, 255]: {self.score_j}")


@dataclass(frozen=True)
class TruthInstance:
    correspondence: Mapping[int, int]
    polygon: Optional[tuple[Point, ...]] = None
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        values = list(self.correspondence.values())
        if len(set(values)) != len(values):
            raise ValidationError("ground-truth correspondence is not injective")
        if self.polygon is None and self.mask is None:
            raise ValidationError("ground-truth instance needs a polygon or a mask")


@dataclass(frozen=True)
class GroundTruth:
    instances: tuple[TruthInstance, ...]
    scene_size: tuple[int, int]
    notes: dict = field(default_factory=dict, compare=False)


def match_sets(template: KeyPointSet, scene: KeyPointSet, ratio_threshold: float = 0.8) -> list[Match]:
    """Exact nearest-neighbour matching with the ratio test.

    Every scene keypoint is matched to its nearest template descriptor; the
    match is kept when nearest/second-nearest distance < ``ratio_threshold``.
    Equal distances resolve to the smaller template id.
    """
    if len(template) == 0 or len(scene) == 0:
        raise ValidationError("matching needs non-empty keypoint sets")
    if not 0 < ratio_threshold <= 1:
        raise ValidationError(f"ratio threshold must be in (0, 1], got {ratio_threshold}")
    order = np.argsort(template.ids, kind="stable")
    t_ids = template.ids[order]
    t_desc = template.descriptors[order]
    out = []
    chunk = 512
    for start in range(0, len(scene), chunk):
        d = cdist(scene.descriptors[start:start + chunk], t_desc)
        best = np.argmin(d, axis=1)
        d1 = d[np.arange(d.shape[0]), best]
        if len(template) > 1:
            d2 = np.partition(d, 1, axis=1)[:, 1]
            keep = d1 < ratio_threshold * d2
        else:
            keep = np.ones(d.shape[0], dtype=bool)
        for k in np.flatnonzero(keep):
            out.append(Match(int(t_ids[best[k]]), int(scene.ids[start + k]), float(d1[k])))
    return out


def matched_subsets(template: KeyPointSet, scene: KeyPointSet, matches: Sequence[Match]):
    """Prune both sets to the keypoints involved in at least one match."""
    t_keep = {m.template_id for m in matches}
    s_keep = {m.scene_id for m in matches}
    return template.subset(t_keep), scene.subset(s_keep)
