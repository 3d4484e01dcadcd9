"""Affine maps and homographies as small immutable wrappers over numpy matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateTriangleError, ValidationError
from .predicates import EPS, orient2d


@dataclass(frozen=True, eq=False)
class AffineMap:
    matrix: np.ndarray  # 2x3

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValidationError(f"affine matrix must be 2x3, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "AffineMap":
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    @property
    def linear(self) -> np.ndarray:
        return self.matrix[:, :2]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:, 2]

    def apply(self, pts) -> np.ndarray:
        p = np.asarray(pts, dtype=np.float64)
        return p @ self.linear.T + self.translation

    def inverse(self) -> "AffineMap":
        lin_inv = np.linalg.inv(self.linear)
        return AffineMap(np.column_stack([lin_inv, -lin_inv @ self.translation]))

    def compose(self, other: "AffineMap") -> "AffineMap":
        """``self`` after ``other``."""
        lin = self.linear @ other.linear
        return AffineMap(np.column_stack([lin, self.linear @ other.translation + self.translation]))


def affine_from_triangles(src, dst) -> AffineMap:
    """The affine map sending the three ``src`` points onto ``dst``."""
    s = np.asarray(src, dtype=np.float64).reshape(3, 2)
    d = np.asarray(dst, dtype=np.float64).reshape(3, 2)
    if abs(orient2d(s[0], s[1], s[2])) <= EPS:
        raise DegenerateTriangleError("source triangle is degenerate (collinear points)")
    a = np.column_stack([s, np.ones(3)])
    return AffineMap(np.linalg.solve(a, d).T)


def affine_batch(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Solve many triangle-to-triangle maps at once: (k,3,2) x2 -> (k,2,3)."""
    k = src.shape[0]
    a = np.concatenate([src, np.ones((k, 3, 1))], axis=2)
    return np.linalg.solve(a, dst).transpose(0, 2, 1)


@dataclass(frozen=True, eq=False)
class Homography:
    matrix: np.ndarray  # 3x3, defined up to scale

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValidationError(f"homography must be 3x3, got {m.shape}")
        if abs(m[2, 2]) > 1e-12:
            m = m / m[2, 2]
        if abs(np.linalg.det(m)) < 1e-15:
            raise ValidationError("homography is singular")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def apply(self, pts) -> np.ndarray:
        p = np.asarray(pts, dtype=np.float64)
        h = p @ self.matrix[:, :2].T + self.matrix[:, 2]
        return h[..., :2] / h[..., 2:3]

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))
