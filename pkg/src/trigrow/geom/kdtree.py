"""Balanced kd partition of a keypoint set into a fixed number of leaves."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InfeasiblePartitionError

Rect = tuple[float, float, float, float]  # xmin, ymin, xmax, ymax


@dataclass(frozen=True)
class KdPartition:
    bbox: Rect
    leaves: tuple[Rect, ...]
    members: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        lookup = {}
        for k, ids in enumerate(self.members):
            for i in ids:
                lookup[i] = k
        object.__setattr__(self, "_leaf_of", lookup)

    def __len__(self) -> int:
        return len(self.leaves)

    def leaf_of(self, kp_id: int) -> int:
        """Index of the leaf holding keypoint ``kp_id``."""
        return self._leaf_of[kp_id]

    def counts(self) -> list[int]:
        return [len(m) for m in self.members]


def kd_partition(points, leaves: int) -> KdPartition:
    """Split ``points`` (a KeyPointSet) into exactly ``leaves`` non-empty cells.

    A node that must produce k leaves cuts its points along the wider axis of
    their bounding box, sending a proportional share floor(c * (k//2) / k) to
    the lower side. Leaf counts therefore differ by at most one.
    """
    n = len(points)
    if leaves < 1:
        raise InfeasiblePartitionError(f"leaf count must be positive, got {leaves}")
    if leaves > n:
        raise InfeasiblePartitionError(f"cannot make {leaves} non-empty leaves from {n} points")
    ids = np.asarray(points.ids, dtype=np.int64)
    xy = np.asarray(points.xy, dtype=np.float64)
    lo = xy.min(axis=0)
    hi = xy.max(axis=0)
    bbox = (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))

    rects: list[Rect] = []
    members: list[tuple[int, ...]] = []

    def build(rows: np.ndarray, rect: Rect, k: int):
        if k == 1:
            rects.append(rect)
            members.append(tuple(int(i) for i in sorted(ids[rows])))
            return
        sub = xy[rows]
        extent = sub.max(axis=0) - sub.min(axis=0)
        axis = 0 if extent[0] >= extent[1] else 1
        order = np.lexsort((ids[rows], sub[:, 1 - axis], sub[:, axis]))
        rows = rows[order]
        k_low = k // 2
        n_low = (len(rows) * k_low) // k
        cut = 0.5 * (xy[rows[n_low - 1], axis] + xy[rows[n_low], axis])
        x0, y0, x1, y1 = rect
        if axis == 0:
            low, high = (x0, y0, cut, y1), (cut, y0, x1, y1)
        else:
            low, high = (x0, y0, x1, cut), (x0, cut, x1, y1)
        build(rows[:n_low], low, k_low)
        build(rows[n_low:], high, k - k_low)

    build(np.arange(n), bbox, leaves)
    return KdPartition(bbox, tuple(rects), tuple(members))
