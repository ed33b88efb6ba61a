"""Neighborhood parameters and the nested neighborhoods of each stratum.

For a stratum X of dimension j < d and rank r, with m(x) = min(gamma^(r beta),
dist(x, X_{j-1})):

* outer:     dist(x, X) <= gamma^alpha * m(x)
* inner:     dist(x, X) <= gamma^beta  * m(x)
* wellposed: dist(x, X) <= A3 * truncdist(x, X_{j-1})

Full-dimensional strata use plain region membership for all three.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .strata import Stratification, _batch, _unbatch


class ParamsError(ValueError):
    pass


@dataclass(frozen=True)
class NeighborhoodParams:
    alpha: float
    beta: float
    gamma: float
    R: int
    gamma0: float = 1.0
    G: float = 1.0
    L0: float = 1e-6
    L1: float = 1e-6
    L2: float = 1.0
    A3: float = 0.25
    lambda_lo: float = 1.0
    lambda_hi: float = 1.0
    strict: bool = field(default=False, compare=False)

    def __post_init__(self):
        errs = self.structural_violations()
        if errs:
            raise ParamsError("invalid neighborhood parameters: " + "; ".join(errs))
        if self.strict:
            bad = [k for k, ok in self.hypotheses().items() if not ok]
            if bad:
                raise ParamsError("step-size hypotheses violated: " + "; ".join(bad))

    @property
    def A1(self) -> float:
        return self.lambda_lo / (16 * self.lambda_hi ** 2)

    @property
    def A2(self) -> float:
        return self.L2 ** 2 * (4 * self.lambda_hi ** 2 / self.lambda_lo + self.lambda_lo / 2)

    @property
    def descent_factor(self) -> float:
        """max(4 lam_hi G, 8 L2 lam_hi^2 / lam_lo, 2 L1 G lam_hi)."""
        lh, ll = self.lambda_hi, self.lambda_lo
        return max(4 * lh * self.G, 8 * self.L2 * lh ** 2 / ll, 2 * self.L1 * self.G * lh)

    def structural_violations(self) -> list:
        out = []
        if not 0 < self.alpha < self.beta:
            out.append("0 < alpha < beta")
        if not (self.R + 1) * self.beta < 1:
            out.append("(R+1) beta < 1")
        if not 0 < self.gamma < self.gamma0 <= 1:
            out.append("0 < gamma < gamma0 <= 1")
        if not 0 < self.A3 <= 0.25:
            out.append("0 < A3 <= 1/4")
        if not 0 < self.lambda_lo <= self.lambda_hi:
            out.append("0 < lambda_lo <= lambda_hi")
        for k in ("G", "L0", "L1", "L2"):
            if not getattr(self, k) > 0:
                out.append(f"{k} > 0")
        return out

    def hypotheses(self) -> dict:
        """The step-size ceiling conditions used by the convergence analysis."""
        g0, a, b, R = self.gamma0, self.alpha, self.beta, self.R
        return {
            "4 gamma0^(beta-alpha) <= 1": 4 * g0 ** (b - a) <= 1,
            "3 gamma0^alpha <= A3": 3 * g0 ** a <= self.A3,
            "2 G <= gamma0^((R+1) beta - 1)": 2 * self.G <= g0 ** ((R + 1) * b - 1),
            "descent factor <= gamma0^(R beta - 1)": self.descent_factor <= g0 ** (R * b - 1),
            "gamma^alpha <= A3": self.gamma ** a <= self.A3,
        }

    def geom_hypotheses(self) -> dict:
        g0, a, b, R = self.gamma0, self.alpha, self.beta, self.R
        return {
            "4 gamma0^beta <= gamma0^alpha": 4 * g0 ** b <= g0 ** a,
            "2 G <= gamma0^((R+1) beta - 1)": 2 * self.G <= g0 ** ((R + 1) * b - 1),
        }

    def with_gamma(self, gamma: float) -> "NeighborhoodParams":
        return replace(self, gamma=float(gamma))

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("strict")
        out["A1"] = self.A1
        out["A2"] = self.A2
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, rec: dict, strict: bool = False) -> "NeighborhoodParams":
        rec = dict(rec)
        a1, a2 = rec.pop("A1", None), rec.pop("A2", None)
        p = cls(**rec, strict=strict)
        for name, given, derived in (("A1", a1, p.A1), ("A2", a2, p.A2)):
            if given is not None and not math.isclose(given, derived, rel_tol=1e-12):
                raise ParamsError(f"{name} = {given} does not match its defining formula ({derived})")
        return p

    @classmethod
    def from_json(cls, text: str, strict: bool = False) -> "NeighborhoodParams":
        return cls.from_dict(json.loads(text), strict=strict)


def auto_exponents(R: int):
    """beta = 1/(R+2), alpha = beta/3."""
    beta = 1.0 / (R + 2)
    return beta / 3, beta


def corollary_gamma(K: int, R: int) -> float:
    """Step size K^(-1 + 2/(3R+8)) balancing the three error terms."""
    return float(K) ** (-1 + 2 / (3 * R + 8))


def auto_params(fn, gamma: float, gamma0: float = 1.0, alpha=None, beta=None, strict=False) -> NeighborhoodParams:
    """Parameters for catalog function `fn` with its frozen constants."""
    R = fn.stratification.R
    a_auto, b_auto = auto_exponents(R)
    alpha = a_auto if alpha in (None, "auto") else float(alpha)
    beta = b_auto if beta in (None, "auto") else float(beta)
    c = fn.constants
    return NeighborhoodParams(
        alpha=alpha, beta=beta, gamma=float(gamma), R=R, gamma0=gamma0,
        G=c["G"], L0=c["L0"], L1=c["L1"], L2=c["L2"], A3=c["A3"],
        lambda_lo=c["lambda_lo"], lambda_hi=c["lambda_hi"], strict=strict,
    )


# --------------------------------------------------------------------------
# Membership predicates
# --------------------------------------------------------------------------

def _scale(strat: Stratification, sid: int, X, p: NeighborhoodParams):
    """m(x) = min(gamma^(r beta), dist(x, X_{j-1}))."""
    s = strat[sid]
    return np.minimum(p.gamma ** (s.rank * p.beta), strat.lower_dist(X, sid))


def outer_threshold(strat, sid, X, p):
    return p.gamma ** p.alpha * _scale(strat, sid, X, p)


def inner_threshold(strat, sid, X, p):
    return p.gamma ** p.beta * _scale(strat, sid, X, p)


def _member(strat, sid, X, p, power):
    s = strat[sid]
    if s.dim == strat.d:
        return s.contains(X)
    Xb, single = _batch(X)
    thr = p.gamma ** power * _scale(strat, sid, Xb, p)
    return _unbatch(s._dist(Xb) <= thr, single)


def in_outer(strat, sid, X, p):
    return _member(strat, sid, X, p, p.alpha)


def in_inner(strat, sid, X, p):
    return _member(strat, sid, X, p, p.beta)


def in_wellposed(strat, sid, X, p):
    s = strat[sid]
    if s.dim == strat.d:
        return s.contains(X)
    Xb, single = _batch(X)
    ok = s._dist(Xb) <= p.A3 * np.minimum(strat.lower_dist(Xb, sid), 1.0)
    return _unbatch(ok, single)


_QUANT = {"<": np.less, "<=": np.less_equal, "=": np.equal}


def _union(pred, strat, X, j, quant, p):
    if quant not in _QUANT:
        raise ValueError(f"quantifier must be one of {list(_QUANT)}")
    Xb, single = _batch(X)
    out = np.zeros(len(Xb), bool)
    for s in strat.strata:
        if _QUANT[quant](s.dim, j):
            out |= pred(strat, s.id, Xb, p)
    return _unbatch(out, single)


def in_inner_union(strat, X, j, quant, p):
    """Membership in the union of inner neighborhoods of strata with dim (quant) j."""
    return _union(in_inner, strat, X, j, quant, p)


def in_outer_union(strat, X, j, quant, p):
    return _union(in_outer, strat, X, j, quant, p)


@dataclass
class MembershipTable:
    """Boolean inner/outer membership per iterate (rows) and stratum (columns).

    `dist` holds dist(x_k, X) and is used only to pick the closest
    full-dimensional stratum; it may be omitted for synthetic tables.
    """

    inner: np.ndarray
    outer: np.ndarray
    dims: np.ndarray
    d: int
    dist: np.ndarray | None = None

    def __post_init__(self):
        self.inner = np.asarray(self.inner, bool)
        self.outer = np.asarray(self.outer, bool)
        self.dims = np.asarray(self.dims, int)
        if self.inner.shape != self.outer.shape or self.inner.ndim != 2:
            raise ValueError("inner and outer tables must have the same (K, n_strata) shape")
        if self.inner.shape[1] != len(self.dims):
            raise ValueError("one dimension per stratum column is required")
        if np.any(self.inner & ~self.outer):
            k, s = np.argwhere(self.inner & ~self.outer)[0]
            raise ValueError(f"inner membership without outer membership at k={k + 1}, stratum {s}")
        if self.dist is not None:
            self.dist = np.asarray(self.dist, float)

    @property
    def K(self) -> int:
        return self.inner.shape[0]


def membership_table(strat: Stratification, X, p: NeighborhoodParams) -> MembershipTable:
    Xb, _ = _batch(X)
    n, m = len(Xb), len(strat)
    D = np.stack([s._dist(Xb) for s in strat.strata], axis=1)
    lower = {j: strat.skeleton_dist(Xb, j - 1) for j in set(strat.dims.tolist())}
    inner = np.zeros((n, m), bool)
    outer = np.zeros((n, m), bool)
    for s in strat.strata:
        if s.dim == strat.d:
            inside = s._contains(Xb, 0.0)
            inner[:, s.id] = outer[:, s.id] = inside
            continue
        scale = np.minimum(p.gamma ** (s.rank * p.beta), lower[s.dim])
        outer[:, s.id] = D[:, s.id] <= p.gamma ** p.alpha * scale
        inner[:, s.id] = D[:, s.id] <= p.gamma ** p.beta * scale
    return MembershipTable(inner, outer, strat.dims.copy(), strat.d, D)


# --------------------------------------------------------------------------
# Geometric consequences of the neighborhood definitions
# --------------------------------------------------------------------------

@dataclass
class ItemCheck:
    item: int
    hypothesis: bool
    conclusion: bool
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return (not self.hypothesis) or self.conclusion


def geom_items_many(strat: Stratification, X, X2, sid: int, p: NeighborhoodParams) -> dict:
    """Vectorized form of `geom_items`: item -> (hypothesis, conclusion, lhs, rhs) arrays."""
    s = strat[sid]
    r, j = s.rank, s.dim
    g, a, b = p.gamma, p.alpha, p.beta
    X, _ = _batch(X)
    X2, _ = _batch(X2)
    dx, dx2 = s._dist(X), s._dist(X2)
    inner, outer = in_inner(strat, sid, X, p), in_outer(strat, sid, X, p)
    lower_inner = in_inner_union(strat, X, j, "<", p)
    lower_x = strat.lower_dist(X, sid)
    m2 = np.minimum(g ** (r * b), strat.lower_dist(X2, sid))
    step = np.linalg.norm(X2 - X, axis=1)
    close = (step <= p.G * g) & all(p.geom_hypotheses().values())
    outer2 = in_outer(strat, sid, X2, p)
    sep = np.full(len(X), g ** (a + r * b) / 4)
    c1, c2, c3 = g ** ((1 + r) * b), g ** (a + r * b), g ** (r * b)
    fresh = ~lower_inner
    return {
        1: (inner, dx <= c1, dx, np.full(len(X), c1)),
        2: (outer, dx <= c2, dx, np.full(len(X), c2)),
        3: (fresh, lower_x >= c3, lower_x, np.full(len(X), c3)),
        4: (inner & fresh & close, dx2 <= 3 * g ** b * m2, dx2, 3 * g ** b * m2),
        5: (outer & fresh & close, dx2 <= 3 * g ** a * m2, dx2, 3 * g ** a * m2),
        6: (inner & fresh & ~outer2, step >= sep, step, sep),
    }


def geom_items(strat: Stratification, x, x2, sid: int, p: NeighborhoodParams):
    """Evaluate the six geometric implications at (x, x2) for stratum `sid`.

    With r the rank, j the dimension and m(x) = min(gamma^(r beta), dist(x, X_{j-1})):

    1. x inner                            => dist(x, X) <= gamma^((1+r) beta)
    2. x outer                            => dist(x, X) <= gamma^(alpha + r beta)
    3. x not in any lower inner nbhd      => dist(x, X_{j-1}) >= gamma^(r beta)
    4. x inner, not lower inner, |x2-x| <= G gamma => dist(x2, X) <= 3 gamma^beta m(x2)
    5. as 4 with outer and gamma^alpha
    6. x inner, not lower inner, x2 not outer => |x - x2| >= gamma^(alpha + r beta) / 4

    Items 4 and 5 also require the step-size hypotheses of `geom_hypotheses`.
    """
    res = geom_items_many(strat, np.atleast_2d(x), np.atleast_2d(x2), sid, p)
    return [ItemCheck(i, bool(h[0]), bool(c[0]), float(l[0]), float(r[0])) for i, (h, c, l, r) in res.items()]


def geom_sweep(fn, p: NeighborhoodParams, n: int = 10000, seed: int = 0) -> dict:
    """Check the six items on n random (x, x2, stratum) triples.

    x is drawn around a random stratum at scales spanning its inner and
    outer thresholds; x2 is either a step of length at most G gamma from x
    or a jump at the separation scale. Returns hypothesis and failure counts.
    """
    strat = fn.stratification
    rng = np.random.default_rng(seed)
    sids = rng.integers(0, len(strat), size=n)
    counts = {i: {"hypothesis": 0, "failures": 0} for i in range(1, 7)}
    for sid in range(len(strat)):
        m = int(np.sum(sids == sid))
        if m == 0:
            continue
        s = strat[sid]
        Y = s.sample(m, rng, strat.lo, strat.hi)
        if len(Y) < m:
            Y = Y[rng.integers(0, len(Y), size=m)]
        scale = np.minimum(p.gamma ** (s.rank * p.beta), strat.lower_dist(Y, sid))
        if s.dim == strat.d:
            scale = np.minimum(scale, strat.skeleton_dist(Y, s.dim - 1))
        U = rng.normal(size=Y.shape)
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        mag = scale * p.gamma ** rng.uniform(0.5 * p.alpha, 1.5 * p.beta, size=m)
        X = Y + U * mag[:, None]
        W = rng.normal(size=Y.shape)
        W /= np.linalg.norm(W, axis=1, keepdims=True)
        small = rng.uniform(0, 1, size=m) < 0.5
        jump = np.where(small, p.G * p.gamma * rng.uniform(0, 1, size=m),
                        p.gamma ** (p.alpha + s.rank * p.beta) * 10 ** rng.uniform(-1, 1, size=m))
        X2 = X + W * jump[:, None]
        for i, (h, c, _, _) in geom_items_many(strat, X, X2, sid, p).items():
            counts[i]["hypothesis"] += int(np.sum(h))
            counts[i]["failures"] += int(np.sum(h & ~c))
    return counts


def skeleton_lower_bound(strat: Stratification, x, sid: int, p: NeighborhoodParams):
    """Lower bound min(gamma^(r beta), dist(x, X_{j-1})) >= gamma^(1-beta) / gamma0^(1-(R+1) beta).

    Returns (lhs, rhs). Raises ParamsError when the preconditions fail.
    """
    g0, g, a, b, R = p.gamma0, p.gamma, p.alpha, p.beta, p.R
    if not 0 < g0 < 1:
        raise ParamsError("requires gamma0 in (0, 1)")
    if not 4 * g0 ** b <= g0 ** a:
        raise ParamsError("requires 4 gamma0^beta <= gamma0^alpha")
    if not g < g0:
        raise ParamsError("requires gamma < gamma0")
    if not (R + 1) * b < 1:
        raise ParamsError("requires (R+1) beta < 1")
    s = strat[sid]
    if in_inner_union(strat, x, s.dim, "<", p):
        raise ParamsError("x lies in a lower-dimensional inner neighborhood")
    lhs = min(g ** (s.rank * b), float(strat.lower_dist(x, sid)))
    rhs = g ** (1 - b) / g0 ** (1 - (R + 1) * b)
    return lhs, rhs


def varying_neighborhoods(i: int, schedule, K: int, base: NeighborhoodParams):
    """Parameters frozen on the i-th doubling interval (1-based).

    The step used is the one at the start of the next interval, or the
    step after the horizon for the last interval.
    """
    from .descent import doubling_intervals

    intervals = doubling_intervals(schedule, K)
    if not 1 <= i <= len(intervals):
        raise IndexError(f"interval {i} out of range 1..{len(intervals)}")
    a, b = intervals[i - 1]
    return (a, b), base.with_gamma(schedule.interval_gamma(b))


def theory_params(fn, alpha=None, beta=None, shrink: float = 0.5) -> NeighborhoodParams:
    """Strict parameters: the largest gamma0 meeting every step-size hypothesis,
    and gamma = shrink * gamma0.

    These steps are far smaller than the ones used in experiments; they are
    meant for checking the geometric statements under their hypotheses.
    """
    R = fn.stratification.R
    a_auto, b_auto = auto_exponents(R)
    a = a_auto if alpha is None else alpha
    b = b_auto if beta is None else beta
    probe = auto_params(fn, 0.5, 1.0, a, b)
    caps = [
        4.0 ** (-1 / (b - a)),
        (probe.A3 / 3) ** (1 / a),
        (2 * probe.G) ** (1 / ((R + 1) * b - 1)),
    ]
    if probe.descent_factor > 1:
        caps.append(probe.descent_factor ** (1 / (R * b - 1)))
    g0 = min(caps) * (1 - 1e-9)
    return auto_params(fn, shrink * g0, g0, a, b, strict=True)
