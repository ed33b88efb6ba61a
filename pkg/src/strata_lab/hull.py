"""Minimum-norm element of a convex hull and the spurious-point descent variant."""

from __future__ import annotations

from itertools import combinations

import numpy as np


class ZeroInHull(ValueError):
    """The origin belongs to the hull: the point is critical, not spurious."""


def _affine_min_norm(V):
    """Min-norm point of the affine hull of rows of V, or None if degenerate."""
    m = len(V)
    A = np.zeros((m + 1, m + 1))
    A[:m, :m] = V @ V.T
    A[:m, m] = 1.0
    A[m, :m] = 1.0
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    if np.linalg.matrix_rank(A) < m + 1:
        return None
    lam = np.linalg.solve(A, rhs)[:m]
    return lam


def min_norm_hull(V, tol: float = 1e-13) -> np.ndarray:
    """Exact min-norm point of conv(V) by enumerating faces.

    Every face of the hull is the convex hull of at most d+1 affinely
    independent generators; the minimizer is the affine minimizer of the
    face that has non-negative barycentric weights and smallest norm.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    n, d = V.shape
    if n == 0:
        raise ValueError("empty generator set")
    best, best_norm = None, np.inf
    for size in range(1, min(n, d + 1) + 1):
        for idx in combinations(range(n), size):
            S = V[list(idx)]
            lam = np.ones(1) if size == 1 else _affine_min_norm(S)
            if lam is None or np.any(lam < -tol):
                continue
            lam = np.clip(lam, 0, None)
            lam /= lam.sum()
            p = lam @ S
            nrm = float(np.linalg.norm(p))
            if nrm < best_norm - 1e-15:
                best, best_norm = p, nrm
    return best


def _hull_vertices_2d(P):
    """Andrew's monotone chain; returns hull vertices (collinear points dropped)."""
    P = np.unique(P, axis=0)
    if len(P) <= 2:
        return P
    pts = sorted(map(tuple, P))

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def delta_subdifferential(fn, x, delta: float, n: int = 2001, seed: int = 0) -> np.ndarray:
    """Generators of conv of subgradients sampled on the closed delta-ball around x.

    The center and the kink patterns there are always included so that the
    limiting gradients at x are present.
    """
    x = np.asarray(x, dtype=float)
    d = len(x)
    rng = np.random.default_rng(seed)
    if d == 1:
        pts = x + np.linspace(-delta, delta, n)[:, None]
    else:
        U = rng.normal(size=(n, d))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        pts = x + U * (delta * rng.uniform(0, 1, size=n) ** (1 / d))[:, None]
    pts = np.vstack([x[None], pts])
    V = fn.subgradient(pts)
    S = np.sign(fn._kinks(x[None]))[0]
    zero = np.flatnonzero(S == 0)
    for pattern in np.array(np.meshgrid(*[[-1.0, 1.0]] * len(zero))).reshape(len(zero), -1).T if len(zero) else []:
        s = S.copy()
        s[zero] = pattern
        V = np.vstack([V, fn._grad(x[None], s[None])])
    if d == 1:
        return np.array([[V.min()], [V.max()]])
    if d == 2:
        return _hull_vertices_2d(np.round(V, 12))
    return np.unique(np.round(V, 12), axis=0)


def spurious_ledger_variant(fn, z, traj, k_range, delta=None, params=None, tol: float = 1e-12) -> dict:
    """Descent record around a 0-dim stratum z that is not critical.

    Uses v = min-norm element of the delta-subdifferential at z and the
    affine model g(x') = f(z) + <v, x' - z>. Each step inside the ball
    should decrease g by at least gamma_k |v|^2. Without `delta` the radius
    gamma0^alpha of `params` is used.
    """
    if delta is None:
        if params is None:
            raise ValueError("give delta or params")
        delta = params.gamma0 ** params.alpha
    z = np.asarray(z, dtype=float)
    v = min_norm_hull(delta_subdifferential(fn, z, delta))
    vn2 = float(v @ v)
    if vn2 <= tol ** 2:
        raise ZeroInHull(f"0 lies in the delta-subdifferential at {z.tolist()}")
    a, b = k_range
    f0 = float(fn.value(z))
    rows = []
    for k in range(a, b + 1):
        x, xn = traj.x[k - 1], traj.x[k]
        g, gn = f0 + float(v @ (x - z)), f0 + float(v @ (xn - z))
        dec = g - gn
        need = traj.gamma[k - 1] * vn2
        rows.append({
            "k": k, "g": g, "g_next": gn, "decrease": dec, "required": need,
            "inside": bool(np.linalg.norm(x - z) <= delta), "ok": bool(dec >= need - tol * max(1.0, abs(g))),
        })
    hyp = None if params is None else bool(params.gamma ** params.alpha <= delta)
    return {"delta": float(delta), "v": v.tolist(), "v_norm_sq": vn2, "rows": rows, "all_ok": all(r["ok"] for r in rows),
            "all_inside": all(r["inside"] for r in rows), "radius_hypothesis": hyp}
