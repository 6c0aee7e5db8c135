from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DecompositionError(ValueError):
    pass


@dataclass(frozen=True)
class AffineTransform:
    """``x' = A x + t`` with ``A = [[a11, a12], [a21, a22]]``; third row is (0, 0, 1)."""

    a11: float = 1.0
    a12: float = 0.0
    a21: float = 0.0
    a22: float = 1.0
    tx: float = 0.0
    ty: float = 0.0

    @classmethod
    def from_matrix(cls, h) -> "AffineTransform":
        h = np.asarray(h, dtype=np.float64)
        return cls(float(h[0, 0]), float(h[0, 1]), float(h[1, 0]), float(h[1, 1]),
                   float(h[0, 2]), float(h[1, 2]))

    @classmethod
    def from_params(cls, theta: float, sx: float, sy: float, tx: float = 0.0,
                    ty: float = 0.0) -> "AffineTransform":
        """Build ``A = R(theta) @ diag(sx, sy)``; ``theta`` in radians."""
        c, s = math.cos(theta), math.sin(theta)
        return cls(c * sx, -s * sy, s * sx, c * sy, tx, ty)

    @property
    def linear(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    def matrix(self) -> np.ndarray:
        return np.array([[self.a11, self.a12, self.tx],
                         [self.a21, self.a22, self.ty],
                         [0.0, 0.0, 1.0]])

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    def is_degenerate(self, eps: float = 1e-12) -> bool:
        return not np.all(np.isfinite(self.matrix())) or abs(self.det) <= eps

    def apply(self, pts) -> np.ndarray:
        """Map an ``N x 2`` array (or a single point) of (x, y)."""
        p = np.asarray(pts, dtype=np.float64)
        return p @ self.linear.T + self.translation

    def inverse(self) -> "AffineTransform":
        if self.is_degenerate():
            raise DecompositionError("singular affine has no inverse")
        return AffineTransform.from_matrix(np.linalg.inv(self.matrix()))

    def compose(self, other: "AffineTransform") -> "AffineTransform":
        """``self ∘ other`` (apply ``other`` first)."""
        return AffineTransform.from_matrix(self.matrix() @ other.matrix())

    def to_dict(self) -> dict:
        return {"a11": self.a11, "a12": self.a12, "a21": self.a21, "a22": self.a22,
                "tx": self.tx, "ty": self.ty}


def decompose_affine(h: AffineTransform, eps: float = 1e-12):
    """Split ``A = R(theta) @ diag(sx, sy)`` and return ``(theta, sx, sy, tx, ty)``.

    ``theta`` is in radians in (-pi, pi]. Any shear component is dropped, so
    recomposition is exact only for matrices of that form.
    """
    if math.hypot(h.a11, h.a21) < eps:
        raise DecompositionError("first column of A is (near) zero")
    theta = math.atan2(h.a21, h.a11)
    c, s = math.cos(theta), math.sin(theta)
    sx = c * h.a11 + s * h.a21
    sy = -s * h.a12 + c * h.a22
    return theta, sx, sy, h.tx, h.ty
