"""Thin-plate spline fitting and evaluation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateConfigurationError, ValidationError


def _kernel(r2: np.ndarray) -> np.ndarray:
    # U(r) = r^2 log r^2, with U(0) = 0
    out = np.zeros_like(r2)
    nz = r2 > 0
    out[nz] = r2[nz] * np.log(r2[nz])
    return out


@dataclass(frozen=True, eq=False)
class ThinPlateSpline:
    source: np.ndarray  # (n, 2) control points in the domain
    target: np.ndarray  # (n, 2) their images
    affine: np.ndarray  # (3, 2): rows are constant, x and y coefficients
    weights: np.ndarray  # (n, 2) kernel weights
    regularization: float = 0.0

    def apply(self, pts) -> np.ndarray:
        p = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        out = np.empty_like(p)
        chunk = 65536
        for start in range(0, len(p), chunk):
            q = p[start:start + chunk]
            d2 = ((q[:, None, :] - self.source[None, :, :]) ** 2).sum(axis=2)
            out[start:start + chunk] = (
                self.affine[0] + q @ self.affine[1:] + _kernel(d2) @ self.weights
            )
        return out

    @property
    def affine_matrix(self) -> np.ndarray:
        """The affine part as a 2x3 matrix [linear | translation]."""
        return np.column_stack([self.affine[1:].T, self.affine[0]])


def tps_fit(src, dst, regularization: float = 0.0) -> ThinPlateSpline:
    """Fit the spline sending ``src[i]`` to ``dst[i]``.

    With zero regularisation the map interpolates the controls exactly; a
    positive value is added to the kernel diagonal and smooths the fit.
    """
    s = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    d = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if s.shape != d.shape:
        raise ValidationError(f"control lists differ in length: {len(s)} vs {len(d)}")
    if regularization < 0:
        raise ValidationError("regularization must be non-negative")
    n = len(s)
    if n < 3:
        raise DegenerateConfigurationError(f"thin-plate spline needs at least 3 controls, got {n}")
    scale = max(float(np.ptp(s, axis=0).max()), 1.0)
    if np.linalg.matrix_rank(s - s.mean(axis=0), tol=1e-9 * scale) < 2:
        raise DegenerateConfigurationError("thin-plate spline controls are collinear")
    if regularization == 0 and len({(float(x), float(y)) for x, y in s}) != n:
        raise DegenerateConfigurationError("duplicate thin-plate spline controls")
    d2 = ((s[:, None, :] - s[None, :, :]) ** 2).sum(axis=2)
    K = _kernel(d2) + regularization * np.eye(n)
    P = np.column_stack([np.ones(n), s])
    L = np.zeros((n + 3, n + 3))
    L[:n, :n] = K
    L[:n, n:] = P
    L[n:, :n] = P.T
    rhs = np.zeros((n + 3, 2))
    rhs[:n] = d
    try:
        sol = np.linalg.solve(L, rhs)
    except np.linalg.LinAlgError:
        raise DegenerateConfigurationError("singular thin-plate spline system") from None
    if not np.all(np.isfinite(sol)):
        raise DegenerateConfigurationError("singular thin-plate spline system")
    return ThinPlateSpline(s.copy(), d.copy(), sol[n:].copy(), sol[:n].copy(), float(regularization))
