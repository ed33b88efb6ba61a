"""Small geometry kernel: distances, truncated distances and tagged projectors."""

from __future__ import annotations

import numpy as np

SYM_TOL = 1e-12
IDEMPOTENT_TOL = 1e-10


class GeometryError(ValueError):
    pass


def as_point(x) -> np.ndarray:
    """Return `x` as a 1-d float array with finite entries."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise GeometryError(f"a point must be a 1-d array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise GeometryError("point has non-finite coordinates")
    return x


class Projector:
    """An orthogonal projector, validated on construction.

    Only objects of this type are accepted by `project_subspace`, so a
    generic linear map cannot be silently used as a projection.
    """

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise GeometryError(f"projector must be square, got shape {m.shape}")
        if np.max(np.abs(m - m.T), initial=0.0) > SYM_TOL:
            raise GeometryError("projector is not symmetric")
        if np.linalg.norm(m @ m - m) > IDEMPOTENT_TOL:
            raise GeometryError("projector is not idempotent")
        m.setflags(write=False)
        self.matrix = m

    @classmethod
    def from_basis(cls, basis, d: int | None = None) -> "Projector":
        """Projector onto the row span of `basis` (rows assumed orthonormal)."""
        b = np.atleast_2d(np.asarray(basis, dtype=float))
        if b.size == 0:
            if d is None:
                raise GeometryError("empty basis needs an explicit dimension")
            return cls(np.zeros((d, d)))
        return cls(b.T @ b)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def rank(self) -> int:
        return int(round(np.trace(self.matrix)))

    def __matmul__(self, v):
        return self.matrix @ np.asarray(v, dtype=float)

    def __repr__(self):
        return f"Projector(dim={self.dim}, rank={self.rank})"


def project_subspace(P, v) -> np.ndarray:
    """Apply the projector `P` to `v`; plain matrices are rejected."""
    if not isinstance(P, Projector):
        raise TypeError("project_subspace requires a Projector, not a generic linear map")
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != P.dim:
        raise GeometryError(f"dimension mismatch: {v.shape[-1]} vs {P.dim}")
    return v @ P.matrix.T


def _set_dist(x, A) -> np.ndarray:
    """Distance from points `x` (shape (..., d)) to a set-like `A`.

    `A` is an object with a vectorized ``dist`` method, or an iterable of
    such objects (their union). The empty set is at distance 1 by convention.
    """
    if A is None:
        members = []
    elif hasattr(A, "dist"):
        members = [A]
    else:
        members = list(A)
    x = np.asarray(x, dtype=float)
    if not members:
        return np.ones(x.shape[:-1]) if x.ndim > 1 else np.float64(1.0)
    out = members[0].dist(x)
    for m in members[1:]:
        out = np.minimum(out, m.dist(x))
    return out


def dist(x, A):
    """Euclidean distance from `x` to `A`; 1 when `A` is empty."""
    return _set_dist(x, A)


def truncdist(x, A):
    """min(dist(x, A), 1)."""
    return np.minimum(_set_dist(x, A), 1.0)
