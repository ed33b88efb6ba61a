"""Construction of a stratum selection k -> Psi_k along a trajectory.

The builder only looks at boolean membership tables (inner and outer
neighborhood of every stratum at every iterate) plus stratum dimensions,
so it can be exercised on hand-made tables. Indices k are 1-based, as are
the intervals [l, r]; an empty interval is returned as None. Ties between
strata are broken toward the lowest id.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .neighborhoods import MembershipTable, membership_table

NO_ENTRY = math.inf  # k_left when the inner neighborhood is never reached
NO_EXIT = -1  # k_right when no admissible index exists


def k_left(tab: MembershipTable, sid: int, l: int, r: int):
    """First k in [l, r] with x_k in the inner neighborhood of `sid`."""
    hits = np.flatnonzero(tab.inner[l - 1:r, sid])
    return l + int(hits[0]) if len(hits) else NO_ENTRY


def k_right(tab: MembershipTable, sid: int, l: int, r: int):
    """Last k in [l, r] with x_l..x_k all in the outer and x_k in the inner neighborhood."""
    out = tab.outer[l - 1:r, sid]
    stop = np.flatnonzero(~out)
    n = int(stop[0]) if len(stop) else len(out)
    hits = np.flatnonzero(tab.inner[l - 1:l - 1 + n, sid])
    return l + int(hits[-1]) if len(hits) else NO_EXIT


def _all_outer(tab, sid, l, r):
    return bool(np.all(tab.outer[l - 1:r, sid]))


def check_left(tab: MembershipTable, assign: np.ndarray, l: int, r: int, j: int):
    """Handle an interval whose left end may already sit in a j-dim outer neighborhood."""
    cands = np.flatnonzero(tab.dims == j)
    if len(cands) == 0:
        return (l, r)
    kr = [k_right(tab, s, l, r) for s in cands]
    best = max(kr)
    if best == NO_EXIT:
        return (l, r)
    star = int(cands[kr.index(best)])
    if _all_outer(tab, star, l, r):
        assign[l - 1:r] = star
        return None
    assign[l - 1:best] = star
    return (best + 1, r)


def build_inside(tab: MembershipTable, assign: np.ndarray, l: int, r: int, j: int):
    """Assign the next visit of a j-dim inner neighborhood inside [l, r]."""
    cands = np.flatnonzero(tab.dims == j)
    if len(cands) == 0:
        return None
    kl = [k_left(tab, s, l, r) for s in cands]
    first = min(kl)
    if first == NO_ENTRY:
        return None
    star = int(cands[kl.index(first)])
    if _all_outer(tab, star, first, r):
        assign[first - 1:r] = star
        return None
    kr = k_right(tab, star, first, r)
    assign[first - 1:kr] = star
    return (kr + 1, r)


def _free_intervals(assign: np.ndarray):
    free = np.concatenate([[False], assign < 0, [False]])
    edges = np.flatnonzero(np.diff(free.astype(int)))
    return [(int(a) + 1, int(b)) for a, b in zip(edges[::2], edges[1::2])]


def switch_sets(assign, dims):
    """Left and right switching times of every stratum (1-based).

    lswitch(X): k in [2, K] with Psi_k = X != Psi_{k-1} and dim Psi_k <= dim Psi_{k-1}
    rswitch(X): k in [1, K-1] with Psi_k = X != Psi_{k+1} and dim Psi_k <= dim Psi_{k+1}
    """
    a = np.asarray(assign)
    dims = np.asarray(dims)
    K = len(a)
    left = {int(s): [] for s in range(len(dims))}
    right = {int(s): [] for s in range(len(dims))}
    for k in range(2, K + 1):
        cur, prev = a[k - 1], a[k - 2]
        if cur != prev and dims[cur] <= dims[prev]:
            left[int(cur)].append(k)
    for k in range(1, K):
        cur, nxt = a[k - 1], a[k]
        if cur != nxt and dims[cur] <= dims[nxt]:
            right[int(cur)].append(k)
    return left, right


@dataclass
class Selection:
    assignments: np.ndarray
    dims: np.ndarray

    @property
    def K(self) -> int:
        return len(self.assignments)

    def __getitem__(self, k: int) -> int:
        """Psi_k, 1-based."""
        return int(self.assignments[k - 1])

    def switches(self):
        return switch_sets(self.assignments, self.dims)

    def blocks(self):
        """Maximal runs (stratum, first k, last k)."""
        a = self.assignments
        out, start = [], 1
        for k in range(2, len(a) + 2):
            if k == len(a) + 1 or a[k - 1] != a[k - 2]:
                out.append((int(a[start - 1]), start, k - 1))
                start = k
        return out

    def to_dict(self) -> dict:
        left, right = self.switches()
        return {
            "K": self.K,
            "assignments": [int(s) for s in self.assignments],
            "lswitch": {str(s): v for s, v in left.items()},
            "rswitch": {str(s): v for s, v in right.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, rec: dict, dims) -> "Selection":
        return cls(np.asarray(rec["assignments"], int), np.asarray(dims, int))


def build_selection(tab: MembershipTable) -> Selection:
    """Sweep dimensions 0..d-1, then give leftovers to the closest full-dimensional stratum."""
    K = tab.K
    assign = np.full(K, -1, dtype=int)
    for j in range(tab.d):
        if not np.any(tab.dims == j):
            continue
        for l, r in _free_intervals(assign):
            iv = check_left(tab, assign, l, r, j)
            while iv is not None:
                iv = build_inside(tab, assign, iv[0], iv[1], j)
    rest = np.flatnonzero(assign < 0)
    top = np.flatnonzero(tab.dims == tab.d)
    if len(rest):
        if len(top) == 0:
            raise ValueError("no full-dimensional stratum to absorb unassigned iterates")
        if tab.dist is not None:
            assign[rest] = top[np.argmin(tab.dist[np.ix_(rest, top)], axis=1)]
        else:
            member = tab.outer[np.ix_(rest, top)]
            assign[rest] = np.where(member.any(axis=1), top[np.argmax(member, axis=1)], top[0])
    return Selection(assign, tab.dims.copy())


def select_trajectory(strat, traj, params) -> Selection:
    """Selection for iterates x_1..x_K of a trajectory with fixed parameters."""
    tab = membership_table(strat, traj.x[:traj.K], params)
    return build_selection(tab)


def build_selection_varying(strat, traj, schedule, base_params):
    """Selection with parameters frozen on each doubling interval of the schedule.

    Returns the selection and the list of (interval, params) used.
    """
    from .descent import doubling_intervals

    K = traj.K
    assign = np.empty(K, dtype=int)
    used = []
    for a, b in doubling_intervals(schedule, K):
        p = base_params.with_gamma(schedule.interval_gamma(b))
        tab = membership_table(strat, traj.x[a - 1:b], p)
        assign[a - 1:b] = build_selection(tab).assignments
        used.append(((a, b), p))
    return Selection(assign, strat.dims.copy()), used
