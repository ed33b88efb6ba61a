"""Checks of selection validity and goodness, and guarded evaluation of g = f o proj."""

from __future__ import annotations

import numpy as np

from .neighborhoods import MembershipTable, in_wellposed
from .selection import Selection, switch_sets
from .strata import GeometryError, IllPosedProjection


class NotWellPosed(GeometryError):
    """g was requested outside the wellposed neighborhood of the stratum."""


def is_valid(tab: MembershipTable, sel: Selection):
    """Each x_k must be in the outer neighborhood of Psi_k and in no inner
    neighborhood of a lower-dimensional stratum.

    Returns (True, None) or (False, first violation).
    """
    a = np.asarray(sel.assignments)
    rows = np.arange(len(a))
    outer_ok = tab.outer[rows, a]
    lower = tab.dims[None, :] < tab.dims[a][:, None]
    lower_hit = np.any(tab.inner & lower, axis=1)
    bad = np.flatnonzero(~outer_ok | lower_hit)
    if len(bad) == 0:
        return True, None
    k = int(bad[0])
    reason = "not in outer neighborhood" if not outer_ok[k] else "inside a lower-dimensional inner neighborhood"
    return False, {"k": k + 1, "stratum": int(a[k]), "reason": reason}


def is_good(tab: MembershipTable, sel: Selection):
    """Check the three goodness clauses for every stratum.

    1. x_k is in the inner neighborhood at every left or right switch of X.
    2. Between consecutive left switches (starting from 0) some iterate leaves the outer neighborhood.
    3. Between consecutive right switches (ending at K+1) some iterate leaves the outer neighborhood.

    Returns (ok, report) where report has the witnesses or the first violation.
    """
    K = sel.K
    left, right = switch_sets(sel.assignments, tab.dims)
    witnesses = {}
    for X in range(len(tab.dims)):
        out = ~tab.outer[:, X]
        for k in left[X] + right[X]:
            if not tab.inner[k - 1, X]:
                return False, {"clause": 1, "stratum": X, "k": k}
        wl = []
        for s, k in enumerate(left[X]):
            prev = left[X][s - 1] if s else 0
            hits = np.flatnonzero(out[prev:k - 1])
            if not len(hits):
                return False, {"clause": 2, "stratum": X, "interval": [prev, k]}
            wl.append(prev + 1 + int(hits[0]))
        wr = []
        for s, k in enumerate(right[X]):
            nxt = right[X][s + 1] if s + 1 < len(right[X]) else K + 1
            hits = np.flatnonzero(out[k:nxt - 1])
            if not len(hits):
                return False, {"clause": 3, "stratum": X, "interval": [k, nxt]}
            wr.append(k + 1 + int(hits[0]))
        if wl or wr:
            witnesses[X] = {"left": wl, "right": wr}
    return True, {"witnesses": witnesses}


def g_value(fn, sid: int, x, params, guard: bool = True) -> float:
    """g_X(x) = f(proj_X(x)); raises NotWellPosed outside the wellposed set."""
    strat = fn.stratification
    if guard and not in_wellposed(strat, sid, x, params):
        raise NotWellPosed(f"x = {np.asarray(x).tolist()} is outside the wellposed set of stratum {sid}")
    try:
        y = strat[sid].project(x)
    except IllPosedProjection as e:
        raise NotWellPosed(str(e)) from e
    return float(fn.value(y))


def g_grad(fn, sid: int, x, params, guard: bool = True) -> np.ndarray:
    """Gradient of g_X at x: Jac(proj)(x)^T times the restricted gradient at proj(x)."""
    strat = fn.stratification
    if guard and not in_wellposed(strat, sid, x, params):
        raise NotWellPosed(f"x = {np.asarray(x).tolist()} is outside the wellposed set of stratum {sid}")
    s = strat[sid]
    try:
        y = s.project(x)
    except IllPosedProjection as e:
        raise NotWellPosed(str(e)) from e
    J = s.projection_jacobian(x)
    return J.T @ fn.restricted_gradient(sid, y)


def g_many(fn, sid: int, X, params):
    """Vectorized g values and gradients.

    Returns (values, grads, projections, wellposed, attained). Values are NaN
    where the projection is not attained; `wellposed` flags membership in
    the wellposed neighborhood.
    """
    strat = fn.stratification
    s = strat[sid]
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y, ok = s.project_many(X)
    wp = in_wellposed(strat, sid, X, params) & ok
    vals = np.full(len(X), np.nan)
    grads = np.full(X.shape, np.nan)
    if ok.any():
        Yo = Y[ok]
        vals[ok] = fn.value(Yo)
        # the projection of a point near the stratum lies on it up to rounding
        rg = fn.restricted_gradient(sid, Yo, tol=1e-6)
        J = s.jacobian_many(X[ok])
        grads[ok] = np.einsum("nji,nj->ni", J, rg)
    Y = np.where(ok[:, None], Y, np.nan)
    return vals, grads, Y, wp, ok
