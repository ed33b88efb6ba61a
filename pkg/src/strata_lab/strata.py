"""Strata (points, affine pieces, circle arcs, open regions) and stratifications.

All distance and projection routines are vectorized over a leading axis:
they accept a single point of shape (d,) or a batch of shape (n, d).
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import GeometryError, Projector


class IllPosedProjection(GeometryError):
    """The nearest point of the stratum is not attained inside it."""


class CurvatureRadiusExceeded(GeometryError):
    """The normal offset reaches the curvature radius along its direction."""


class NotOnStratum(GeometryError):
    pass


class StratificationError(ValueError):
    pass


def _batch(X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    return np.atleast_2d(X), single


def _unbatch(v, single):
    return v[0] if single else v


def _fmt_bound(b):
    return None if not math.isfinite(b) else float(b)


def _read_bound(b, default):
    return default if b is None else float(b)


class Stratum:
    kind = "abstract"

    def __init__(self, d: int, dim: int, name: str = "", signs=()):
        self.d = int(d)
        self.dim = int(dim)
        self.name = name
        self.signs = tuple(int(s) for s in signs)
        self.id = -1
        self.rank = -1

    # -- distance and membership ------------------------------------------
    def _dist(self, X):
        raise NotImplementedError

    def _contains(self, X, tol):
        raise NotImplementedError

    def dist(self, X):
        Xb, single = _batch(X)
        return _unbatch(self._dist(Xb), single)

    def contains(self, X, tol: float = 1e-12):
        Xb, single = _batch(X)
        return _unbatch(self._contains(Xb, tol), single)

    # -- projection ------------------------------------------------------
    def _project(self, X):
        """Return nearest points and a mask of points where it is attained."""
        raise NotImplementedError

    def project_many(self, X):
        Xb, _ = _batch(X)
        return self._project(Xb)

    def project(self, x):
        Y, ok = self._project(np.atleast_2d(np.asarray(x, dtype=float)))
        if not ok[0]:
            raise IllPosedProjection(f"projection onto stratum {self.id} ({self.name}) is ill-posed at {x}")
        return Y[0]

    def tangent_basis(self, y) -> np.ndarray:
        """Orthonormal rows spanning the tangent space at y (shape (dim, d))."""
        raise NotImplementedError

    def tangent_projector(self, y) -> Projector:
        return Projector.from_basis(self.tangent_basis(y), self.d)

    def _jacobian(self, X, Y):
        raise NotImplementedError

    def jacobian_many(self, X):
        """Projection Jacobians for a batch; NaN where the projection is ill-posed."""
        Xb, _ = _batch(X)
        Y, ok = self._project(Xb)
        J = np.full((len(Xb), self.d, self.d), np.nan)
        if ok.any():
            J[ok] = self._jacobian(Xb[ok], Y[ok])
        return J

    def projection_jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = self.project(x)
        return self._jacobian(x[None], y[None])[0]

    def sample(self, n: int, rng, lo, hi) -> np.ndarray:
        """Draw points of the stratum inside the box [lo, hi]."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        out = {"id": self.id, "name": self.name, "kind": self.kind, "dim": self.dim, "rank": self.rank}
        out.update(self._params())
        out["signs"] = list(self.signs)
        return out

    def _params(self) -> dict:
        return {}

    def __repr__(self):
        return f"{type(self).__name__}(id={self.id}, dim={self.dim}, name={self.name!r})"


class PointStratum(Stratum):
    kind = "point"

    def __init__(self, z, name="", signs=()):
        z = np.asarray(z, dtype=float)
        super().__init__(len(z), 0, name, signs)
        self.z = z

    def _dist(self, X):
        return np.linalg.norm(X - self.z, axis=1)

    def _contains(self, X, tol):
        return self._dist(X) <= tol

    def _project(self, X):
        return np.broadcast_to(self.z, X.shape).copy(), np.ones(len(X), bool)

    def tangent_basis(self, y):
        return np.zeros((0, self.d))

    def _jacobian(self, X, Y):
        return np.zeros((len(X), self.d, self.d))

    def sample(self, n, rng, lo, hi):
        return np.repeat(self.z[None], n, axis=0)

    def _params(self):
        return {"point": self.z.tolist()}


class AffineStratum(Stratum):
    """Open box piece of an affine subspace: {a + t B : lo_i < t_i < hi_i}.

    Covers full lines, rays, open segments and pieces of planes. `basis`
    rows must be orthonormal; infinite bounds are allowed.
    """

    kind = "affine"

    def __init__(self, anchor, basis, bounds=None, name="", signs=()):
        a = np.asarray(anchor, dtype=float)
        B = np.atleast_2d(np.asarray(basis, dtype=float))
        k = B.shape[0]
        if not np.allclose(B @ B.T, np.eye(k), atol=1e-12):
            raise StratificationError("affine basis rows must be orthonormal")
        if k >= len(a):
            raise StratificationError("use an open region for full-dimensional strata")
        super().__init__(len(a), k, name, signs)
        self.a = a
        self.B = B
        if bounds is None:
            bounds = [(-math.inf, math.inf)] * k
        b = np.asarray(bounds, dtype=float).reshape(k, 2)
        if np.any(b[:, 0] >= b[:, 1]):
            raise StratificationError("empty affine piece")
        self.lo, self.hi = b[:, 0], b[:, 1]

    def _coords(self, X):
        t = (X - self.a) @ self.B.T
        return t

    def _dist(self, X):
        t = self._coords(X)
        tc = np.clip(t, self.lo, self.hi)
        return np.linalg.norm(X - (self.a + tc @ self.B), axis=1)

    def _contains(self, X, tol):
        t = self._coords(X)
        normal = np.linalg.norm(X - (self.a + t @ self.B), axis=1)
        inside = np.all((t > self.lo) & (t < self.hi), axis=1)
        return inside & (normal <= tol)

    def _project(self, X):
        t = self._coords(X)
        ok = np.all((t > self.lo) & (t < self.hi), axis=1)
        return self.a + t @ self.B, ok

    def tangent_basis(self, y):
        return self.B.copy()

    def _jacobian(self, X, Y):
        return np.broadcast_to(self.B.T @ self.B, (len(X), self.d, self.d)).copy()

    def _param_range(self, lo, hi):
        """Interval of t such that a + t B stays in the box (1-d pieces only)."""
        tmin, tmax = self.lo[0], self.hi[0]
        b = self.B[0]
        for i in range(self.d):
            if abs(b[i]) < 1e-15:
                if not lo[i] <= self.a[i] <= hi[i]:
                    return None
                continue
            t1, t2 = (lo[i] - self.a[i]) / b[i], (hi[i] - self.a[i]) / b[i]
            tmin, tmax = max(tmin, min(t1, t2)), min(tmax, max(t1, t2))
        return (tmin, tmax) if tmin < tmax else None

    def sample(self, n, rng, lo, hi):
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        if self.dim == 1:
            rng_t = self._param_range(lo, hi)
            if rng_t is None:
                return np.zeros((0, self.d))
            t = rng.uniform(rng_t[0], rng_t[1], size=(n, 1))
            t = np.clip(t, np.nextafter(rng_t[0], np.inf), np.nextafter(rng_t[1], -np.inf))
            return self.a + t @ self.B
        out = []
        span = float(np.linalg.norm(hi - lo))
        tl = np.maximum(self.lo, -span - np.abs(self.a).sum())
        th = np.minimum(self.hi, span + np.abs(self.a).sum())
        for _ in range(200):
            t = rng.uniform(tl, th, size=(4 * n, self.dim))
            P = self.a + t @ self.B
            keep = np.all((P >= lo) & (P <= hi), axis=1) & np.all((t > self.lo) & (t < self.hi), axis=1)
            out.extend(P[keep])
            if len(out) >= n:
                break
        return np.asarray(out[:n]).reshape(-1, self.d)

    def _params(self):
        return {
            "anchor": self.a.tolist(),
            "basis": self.B.tolist(),
            "bounds": [[_fmt_bound(l), _fmt_bound(h)] for l, h in zip(self.lo, self.hi)],
        }


class CircleArc(Stratum):
    """Open arc {c + a (cos t, sin t) : t0 < t < t1} of a circle in the plane.

    Without bounds the whole circle is the stratum.
    """

    kind = "circle-arc"

    def __init__(self, center, radius, theta=None, name="", signs=()):
        c = np.asarray(center, dtype=float)
        if c.shape != (2,):
            raise StratificationError("circle arcs live in the plane")
        if radius <= 0:
            raise StratificationError("radius must be positive")
        super().__init__(2, 1, name, signs)
        self.c = c
        self.radius = float(radius)
        self.theta = None if theta is None else (float(theta[0]), float(theta[1]))
        if self.theta is not None and not self.theta[0] < self.theta[1] <= self.theta[0] + 2 * math.pi:
            raise StratificationError("invalid arc angles")

    def _polar(self, X):
        D = X - self.c
        rho = np.linalg.norm(D, axis=1)
        ang = np.arctan2(D[:, 1], D[:, 0])
        return D, rho, ang

    def _in_arc(self, ang):
        if self.theta is None:
            return np.ones_like(ang, dtype=bool)
        t0, t1 = self.theta
        rel = np.mod(ang - t0, 2 * math.pi)
        return (rel > 0) & (rel < t1 - t0)

    def _endpoints(self):
        t0, t1 = self.theta
        return [self.c + self.radius * np.array([math.cos(t), math.sin(t)]) for t in (t0, t1)]

    def _dist(self, X):
        _, rho, ang = self._polar(X)
        d = np.abs(rho - self.radius)
        if self.theta is None:
            return d
        e0, e1 = self._endpoints()
        de = np.minimum(np.linalg.norm(X - e0, axis=1), np.linalg.norm(X - e1, axis=1))
        return np.where(self._in_arc(ang) & (rho > 0), d, de)

    def _contains(self, X, tol):
        _, rho, ang = self._polar(X)
        return (np.abs(rho - self.radius) <= tol) & self._in_arc(ang)

    def _project(self, X):
        D, rho, ang = self._polar(X)
        ok = (rho > 0) & self._in_arc(ang)
        safe = np.where(rho > 0, rho, 1.0)
        return self.c + self.radius * D / safe[:, None], ok

    def _unit_normal(self, y):
        return (np.asarray(y, float) - self.c) / self.radius

    def tangent_basis(self, y):
        u = self._unit_normal(y)
        return np.array([[-u[1], u[0]]])

    def shape_operator(self, y, w) -> np.ndarray:
        """Shape operator at y in unit normal direction w, in the tangent basis."""
        u = self._unit_normal(y)
        return np.array([[-float(np.dot(w, u)) / self.radius]])

    def curvature_radius(self, y, w) -> float:
        """Distance along w at which the normal lines focus (inf if never)."""
        s = float(np.dot(w, self._unit_normal(y)))
        return self.radius / -s if s < 0 else math.inf

    def projection_jacobian(self, x):
        """(Id - r S_{w,y})^{-1} P_y, computed in the tangent basis."""
        x = np.asarray(x, dtype=float)
        y = self.project(x)
        T = self.tangent_basis(y)
        r = float(np.linalg.norm(x - y))
        if r == 0.0:
            return T.T @ T
        w = (x - y) / r
        if r >= self.curvature_radius(y, w):
            raise CurvatureRadiusExceeded(f"offset {r} reaches the curvature radius at {y}")
        M = np.eye(T.shape[0]) - r * self.shape_operator(y, w)
        return T.T @ np.linalg.solve(M, T)

    def _jacobian(self, X, Y):
        # closed form a / rho * P_y, used for batches
        D = X - self.c
        rho = np.linalg.norm(D, axis=1)
        U = D / rho[:, None]
        t = np.stack([-U[:, 1], U[:, 0]], axis=1)
        return (self.radius / rho)[:, None, None] * t[:, :, None] * t[:, None, :]

    def sample(self, n, rng, lo, hi):
        t0, t1 = self.theta if self.theta is not None else (0.0, 2 * math.pi)
        out = []
        for _ in range(200):
            t = rng.uniform(t0, t1, size=4 * n)
            P = self.c + self.radius * np.stack([np.cos(t), np.sin(t)], axis=1)
            keep = np.all((P >= lo) & (P <= hi), axis=1)
            out.extend(P[keep])
            if len(out) >= n:
                break
        return np.asarray(out[:n]).reshape(-1, 2)

    def _params(self):
        return {"center": self.c.tolist(), "radius": self.radius, "theta": None if self.theta is None else list(self.theta)}


# Full-dimensional strata exclude a thin band around their boundary so that
# points reported on a lower stratum (within BAND) are never claimed twice.
BAND = 1e-12


class _Region(Stratum):
    """Full-dimensional open stratum: projection is the identity inside."""

    def __init__(self, d, name="", signs=()):
        super().__init__(d, d, name, signs)

    def _project(self, X):
        return X.copy(), self._contains(X, 0.0)

    def tangent_basis(self, y):
        return np.eye(self.d)

    def _jacobian(self, X, Y):
        return np.broadcast_to(np.eye(self.d), (len(X), self.d, self.d)).copy()

    def sample(self, n, rng, lo, hi):
        out = []
        for _ in range(500):
            P = rng.uniform(lo, hi, size=(4 * n, self.d))
            out.extend(P[self._contains(P, 0.0)])
            if len(out) >= n:
                break
        return np.asarray(out[:n]).reshape(-1, self.d)


class OpenBox(_Region):
    """Product of open intervals (bounds may be infinite)."""

    kind = "open-box"

    def __init__(self, lo, hi, name="", signs=()):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if np.any(lo >= hi):
            raise StratificationError("empty open box")
        super().__init__(len(lo), name, signs)
        self.lo, self.hi = lo, hi

    def _dist(self, X):
        return np.linalg.norm(X - np.clip(X, self.lo, self.hi), axis=1)

    def _contains(self, X, tol):
        return np.all((X > self.lo + BAND) & (X < self.hi - BAND), axis=1)

    def sample(self, n, rng, lo, hi):
        a = np.maximum(self.lo, lo)
        b = np.minimum(self.hi, hi)
        P = rng.uniform(a, b, size=(n, self.d))
        return P[self._contains(P, 0.0)]

    def _params(self):
        return {"lo": [_fmt_bound(v) for v in self.lo], "hi": [_fmt_bound(v) for v in self.hi]}


class RadialRegion(_Region):
    """{r_lo < |x - c| < r_hi}; with r_lo = None the center is included."""

    kind = "radial"

    def __init__(self, center, r_lo=None, r_hi=math.inf, name="", signs=()):
        c = np.asarray(center, dtype=float)
        super().__init__(len(c), name, signs)
        self.c = c
        self.r_lo = None if r_lo is None else float(r_lo)
        self.r_hi = float(r_hi)

    def _dist(self, X):
        rho = np.linalg.norm(X - self.c, axis=1)
        lo = -math.inf if self.r_lo is None else self.r_lo
        return np.maximum(0.0, np.maximum(lo - rho, rho - self.r_hi))

    def _contains(self, X, tol):
        rho = np.linalg.norm(X - self.c, axis=1)
        above = np.ones(len(X), bool) if self.r_lo is None else rho > self.r_lo + BAND
        return above & (rho < self.r_hi - BAND)

    def _params(self):
        return {"center": self.c.tolist(), "r_lo": self.r_lo, "r_hi": _fmt_bound(self.r_hi)}


def stratum_from_dict(rec: dict) -> Stratum:
    kind = rec["kind"]
    name = rec.get("name", "")
    signs = rec.get("signs", ())
    if kind == "point":
        return PointStratum(rec["point"], name, signs)
    if kind == "affine":
        bounds = [(_read_bound(l, -math.inf), _read_bound(h, math.inf)) for l, h in rec["bounds"]]
        return AffineStratum(rec["anchor"], rec["basis"], bounds, name, signs)
    if kind == "circle-arc":
        return CircleArc(rec["center"], rec["radius"], rec.get("theta"), name, signs)
    if kind == "open-box":
        lo = [_read_bound(v, -math.inf) for v in rec["lo"]]
        hi = [_read_bound(v, math.inf) for v in rec["hi"]]
        return OpenBox(lo, hi, name, signs)
    if kind == "radial":
        return RadialRegion(rec["center"], rec.get("r_lo"), _read_bound(rec.get("r_hi"), math.inf), name, signs)
    raise StratificationError(f"unknown stratum kind {kind!r}")


class Stratification:
    """A finite partition of the box [lo, hi] into strata.

    Ranks index the active dimensions: if the dimensions present are
    j_0 < j_1 < ... < j_R then a stratum of dimension j_r has rank r.
    """

    def __init__(self, strata, lo, hi, check: bool = True, seed: int = 0):
        self.strata = list(strata)
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.d = len(self.lo)
        if not self.strata:
            raise StratificationError("a stratification needs at least one stratum")
        for i, s in enumerate(self.strata):
            if s.d != self.d:
                raise StratificationError(f"stratum {i} lives in dimension {s.d}, expected {self.d}")
            s.id = i
        self.active_dims = sorted({s.dim for s in self.strata})
        if self.d not in self.active_dims:
            raise StratificationError("no full-dimensional stratum")
        self.R = len(self.active_dims) - 1
        for s in self.strata:
            s.rank = self.active_dims.index(s.dim)
        self.dims = np.array([s.dim for s in self.strata])
        self.ranks = np.array([s.rank for s in self.strata])
        if check:
            self.check_frontier(seed=seed)

    def __len__(self):
        return len(self.strata)

    def __getitem__(self, i) -> Stratum:
        return self.strata[i]

    def with_dim(self, j: int):
        return [s for s in self.strata if s.dim == j]

    def skeleton(self, j: int):
        """Strata of dimension <= j (empty when j < 0 or none exist)."""
        return [s for s in self.strata if s.dim <= j]

    def skeleton_dist(self, X, j: int):
        """Distance to the j-skeleton, with distance 1 to the empty set."""
        Xb, single = _batch(X)
        members = self.skeleton(j)
        if not members:
            return _unbatch(np.ones(len(Xb)), single)
        out = np.min([s._dist(Xb) for s in members], axis=0)
        return _unbatch(out, single)

    def lower_dist(self, X, sid: int):
        """dist(x, X_{dim - 1}) for stratum `sid`."""
        return self.skeleton_dist(X, self.strata[sid].dim - 1)

    def in_box(self, X, tol: float = 0.0):
        Xb, single = _batch(X)
        return _unbatch(np.all((Xb >= self.lo - tol) & (Xb <= self.hi + tol), axis=1), single)

    def locate(self, X):
        """Id of the stratum containing each point (-1 if none), lowest id first."""
        Xb, single = _batch(X)
        out = np.full(len(Xb), -1)
        for s in self.strata:
            hit = (out < 0) & s._contains(Xb, 1e-12)
            out[hit] = s.id
        return _unbatch(out, single)

    def nearest_top(self, X):
        """Closest full-dimensional stratum, ties broken toward the lowest id."""
        Xb, single = _batch(X)
        top = self.with_dim(self.d)
        D = np.stack([s._dist(Xb) for s in top], axis=1)
        ids = np.array([s.id for s in top])
        return _unbatch(ids[np.argmin(D, axis=1)], single)

    def partition_check(self, n: int = 200, extra=None) -> dict:
        """Count how many strata claim each grid point of the box.

        A valid partition has every point claimed exactly once. `extra`
        points (e.g. sampled on lower strata) are checked too.
        """
        axes = [np.linspace(self.lo[i], self.hi[i], n) for i in range(self.d)]
        G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.d)
        if extra is not None and len(extra):
            G = np.vstack([G, extra])
        claims = np.zeros(len(G), int)
        for s in self.strata:
            claims += s._contains(G, 1e-12)
        bad = np.flatnonzero(claims != 1)
        return {"points": len(G), "bad": len(bad), "examples": G[bad[:5]].tolist()}

    def sample_lower(self, n: int, rng):
        pts = [s.sample(n, rng, self.lo, self.hi) for s in self.strata if s.dim < self.d]
        pts = [p for p in pts if len(p)]
        return np.vstack(pts) if pts else np.zeros((0, self.d))

    def check_frontier(self, n: int = 64, seed: int = 0):
        """Sampled check of the frontier condition and of disjointness.

        If some point of X lies in the closure of X' (X != X'), then all of X
        must, and dim X < dim X'.
        """
        rng = np.random.default_rng(seed)
        for s in self.strata:
            P = s.sample(n, rng, self.lo, self.hi)
            if len(P) == 0:
                raise StratificationError(f"stratum {s.id} ({s.name}) does not meet the box")
            for t in self.strata:
                if t is s:
                    continue
                if np.any(t._contains(P, 1e-12)):
                    raise StratificationError(f"strata {s.id} and {t.id} overlap")
                touch = t._dist(P) <= 1e-9
                if touch.any():
                    if not touch.all():
                        raise StratificationError(
                            f"stratum {s.id} meets the closure of {t.id} without lying in its frontier")
                    if s.dim >= t.dim:
                        raise StratificationError(f"stratum {s.id} is in the frontier of {t.id} but not lower dimensional")

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "box": {"lo": self.lo.tolist(), "hi": self.hi.tolist()},
            "R": self.R,
            "active_dims": self.active_dims,
            "strata": [s.to_dict() for s in self.strata],
        }

    @classmethod
    def from_dict(cls, rec: dict, check: bool = False) -> "Stratification":
        strata = [stratum_from_dict(r) for r in rec["strata"]]
        return cls(strata, rec["box"]["lo"], rec["box"]["hi"], check=check)
