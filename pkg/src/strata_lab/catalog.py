"""Catalog of stratifiable test functions.

Every function is piecewise smooth: it is built from a few kink
expressions h_i(x) and a smooth formula F(x, s) in which |h_i| is replaced
by s_i h_i. The subgradient oracle uses s = sign(h(x)) with sign(0) = 0,
and each stratum carries the sign pattern that h has on it, which gives the
smooth extension used for the restricted (Riemannian) gradient.
"""

from __future__ import annotations

import math
import re

import numpy as np

from .strata import (
    AffineStratum,
    CircleArc,
    NotOnStratum,
    OpenBox,
    PointStratum,
    RadialRegion,
    Stratification,
    _batch,
    _unbatch,
)

INF = math.inf


class UnknownFunction(KeyError):
    pass


class CatalogFunction:
    name = "abstract"

    def __init__(self, stratification: Stratification, params: dict, reference: dict):
        self.stratification = stratification
        self.params = dict(params)
        self.reference = dict(reference)
        self._constants = None

    @property
    def d(self) -> int:
        return self.stratification.d

    @property
    def label(self) -> str:
        if not self.params or self.name == "appendix_fig1":
            return self.name
        return f"{self.name}({','.join(repr(v) for v in self.params.values())})"

    # -- to be provided by subclasses -----------------------------------
    def _value(self, X):
        raise NotImplementedError

    def _kinks(self, X):
        raise NotImplementedError

    def _grad(self, X, S):
        raise NotImplementedError

    # -- public oracles --------------------------------------------------
    def value(self, X):
        Xb, single = _batch(X)
        return _unbatch(self._value(Xb), single)

    def signs(self, X):
        Xb, single = _batch(X)
        return _unbatch(np.sign(self._kinks(Xb)), single)

    def subgradient(self, X):
        """Deterministic selection from the Clarke subdifferential."""
        Xb, single = _batch(X)
        return _unbatch(self._grad(Xb, np.sign(self._kinks(Xb))), single)

    def restricted_gradient(self, sid: int, Y, tol: float = 1e-9):
        """Riemannian gradient of f restricted to stratum `sid` at points Y on it."""
        Yb, single = _batch(Y)
        s = self.stratification[sid]
        off = s._dist(Yb)
        if np.any(off > tol):
            raise NotOnStratum(f"point at distance {off.max():.3g} from stratum {sid} ({s.name})")
        S = np.broadcast_to(np.asarray(s.signs, dtype=float), (len(Yb), len(s.signs)))
        grad = self._grad(Yb, S)
        P = s._jacobian(Yb, Yb) if s.dim < self.d else None
        if s.dim == 0:
            out = np.zeros_like(grad)
        elif P is None:
            out = grad
        else:
            out = np.einsum("nij,nj->ni", P, grad)
        return _unbatch(out, single)

    # -- constants ---------------------------------------------------------
    @property
    def constants(self) -> dict:
        if self._constants is None:
            frozen = FROZEN.get(self.label)
            if frozen is None:
                from .constants import estimate_constants, freeze

                frozen = freeze(estimate_constants(self))
            self._constants = dict(frozen)
        return self._constants

    @property
    def lipschitz_G(self) -> float:
        return self.constants["G"]

    def describe(self) -> dict:
        return {
            "name": self.label,
            "params": self.params,
            "reference": {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.reference.items()},
            "constants": self.constants,
            "stratification": self.stratification.to_dict(),
        }


# --------------------------------------------------------------------------
# Stratification builders
# --------------------------------------------------------------------------

def _quadrant_strata():
    e1, e2 = [1.0, 0.0], [0.0, 1.0]
    o = [0.0, 0.0]
    return [
        PointStratum(o, "origin", (0, 0)),
        AffineStratum(o, [e1], [(0, INF)], "x>0,y=0", (1, 0)),
        AffineStratum(o, [e1], [(-INF, 0)], "x<0,y=0", (-1, 0)),
        AffineStratum(o, [e2], [(0, INF)], "x=0,y>0", (0, 1)),
        AffineStratum(o, [e2], [(-INF, 0)], "x=0,y<0", (0, -1)),
        OpenBox([0, 0], [INF, INF], "x>0,y>0", (1, 1)),
        OpenBox([-INF, 0], [0, INF], "x<0,y>0", (-1, 1)),
        OpenBox([-INF, -INF], [0, 0], "x<0,y<0", (-1, -1)),
        OpenBox([0, -INF], [INF, 0], "x>0,y<0", (1, -1)),
    ]


def _fig1_strata(c):
    e1, e2 = [1.0, 0.0], [0.0, 1.0]
    strata = [
        PointStratum([0, 0], "(0,0)", (0, -1, 0)),
        PointStratum([c, 0], "(c,0)", (1, 0, 0)),
        AffineStratum([0, 0], [e2], [(0, INF)], "x=0,y>0", (0, -1, 1)),
        AffineStratum([0, 0], [e2], [(-INF, 0)], "x=0,y<0", (0, -1, -1)),
        AffineStratum([c, 0], [e2], [(0, INF)], "x=c,y>0", (1, 0, 1)),
        AffineStratum([c, 0], [e2], [(-INF, 0)], "x=c,y<0", (1, 0, -1)),
        AffineStratum([0, 0], [e1], [(-INF, 0)], "x<0,y=0", (-1, -1, 0)),
        AffineStratum([0, 0], [e1], [(0, c)], "0<x<c,y=0", (1, -1, 0)),
        AffineStratum([0, 0], [e1], [(c, INF)], "x>c,y=0", (1, 1, 0)),
    ]
    cols = [(-INF, 0, "x<0", (-1, -1)), (0, c, "0<x<c", (1, -1)), (c, INF, "x>c", (1, 1))]
    for ylo, yhi, yname, sy in [(0, INF, "y>0", 1), (-INF, 0, "y<0", -1)]:
        for xlo, xhi, xname, sx in cols:
            strata.append(OpenBox([xlo, ylo], [xhi, yhi], f"{xname},{yname}", (*sx, sy)))
    return strata


def _line_strata_1d():
    return [
        PointStratum([0.0], "0", (0,)),
        OpenBox([0.0], [INF], "x>0", (1,)),
        OpenBox([-INF], [0.0], "x<0", (-1,)),
    ]


# --------------------------------------------------------------------------
# Functions
# --------------------------------------------------------------------------

class AppendixFig1(CatalogFunction):
    """Two vertical kink lines whose weights oscillate in y, a |y| kink, and two
    narrow Gaussian bumps sitting on the lines."""

    name = "appendix_fig1"

    def __init__(self, B1=1.0, B2=1.0, sx=0.02, sy=0.35, mu=0.1, c=0.5, lam=1.0):
        params = dict(B1=B1, B2=B2, sx=sx, sy=sy, mu=mu, c=c, lam=lam)
        strat = Stratification(_fig1_strata(c), [-2.0, -1.0], [2.0, 8.0])
        super().__init__(strat, params, dict(x1=(0.4, 5.5), gamma=0.01, K=5000))

    def _bumps(self, X):
        p = self.params
        x, y = X[:, 0], X[:, 1]
        e1 = p["B1"] * np.exp(-((x - p["c"]) ** 2) / p["sx"] ** 2 - (y - 4.2) ** 2 / p["sy"] ** 2)
        e2 = p["B2"] * np.exp(-(x ** 2) / p["sx"] ** 2 - (y - 3.2) ** 2 / p["sy"] ** 2)
        return e1, e2

    def _value(self, X):
        p = self.params
        x, y = X[:, 0], X[:, 1]
        s = np.sin(np.pi * y)
        e1, e2 = self._bumps(X)
        return (np.abs(y) + 0.5 * p["lam"] * (1 + s) * np.abs(x) + 0.5 * p["lam"] * (1 - s) * np.abs(x - p["c"])
                + p["mu"] * x ** 2 + e1 + e2)

    def _kinks(self, X):
        return np.stack([X[:, 0], X[:, 0] - self.params["c"], X[:, 1]], axis=1)

    def _grad(self, X, S):
        p = self.params
        x, y = X[:, 0], X[:, 1]
        c, lam, sx2, sy2 = p["c"], p["lam"], p["sx"] ** 2, p["sy"] ** 2
        s = np.sin(np.pi * y)
        e1, e2 = self._bumps(X)
        ax, axc = S[:, 0] * x, S[:, 1] * (x - c)
        gx = (0.5 * lam * (1 + s) * S[:, 0] + 0.5 * lam * (1 - s) * S[:, 1] + 2 * p["mu"] * x
              - e1 * 2 * (x - c) / sx2 - e2 * 2 * x / sx2)
        gy = (S[:, 2] + 0.5 * lam * np.pi * np.cos(np.pi * y) * (ax - axc)
              - e1 * 2 * (y - 4.2) / sy2 - e2 * 2 * (y - 3.2) / sy2)
        return np.stack([gx, gy], axis=1)


class AbsDiffSq(CatalogFunction):
    """(|x| - |y|)^2 on the square [-2, 2]^2."""

    name = "abs_diff_sq"

    def __init__(self):
        strat = Stratification(_quadrant_strata(), [-2.0, -2.0], [2.0, 2.0])
        super().__init__(strat, {}, dict(x1=(1.5, 0.3), gamma=0.01, K=2000))

    def _value(self, X):
        return (np.abs(X[:, 0]) - np.abs(X[:, 1])) ** 2

    def _kinks(self, X):
        return X.copy()

    def _grad(self, X, S):
        r = S[:, 0] * X[:, 0] - S[:, 1] * X[:, 1]
        return np.stack([2 * r * S[:, 0], -2 * r * S[:, 1]], axis=1)


class AbsPower(CatalogFunction):
    """|x|^(1 + beta) on [-2, 2]."""

    name = "abs_power"

    def __init__(self, beta=0.5):
        if not beta > 0:
            raise ValueError("abs_power needs beta > 0")
        strat = Stratification(_line_strata_1d(), [-2.0], [2.0])
        super().__init__(strat, dict(beta=float(beta)), dict(x1=(1.5,), gamma=0.01, K=2000))

    def _value(self, X):
        return np.abs(X[:, 0]) ** (1 + self.params["beta"])

    def _kinks(self, X):
        return X.copy()

    def _grad(self, X, S):
        b = self.params["beta"]
        return ((1 + b) * np.abs(X[:, 0]) ** b * S[:, 0])[:, None]


class ShiftedKink(CatalogFunction):
    """|x| + a x on [-2, 2]; critical at 0 only when |a| <= 1."""

    name = "shifted_kink"

    def __init__(self, a=1.3):
        strat = Stratification(_line_strata_1d(), [-2.0], [2.0])
        super().__init__(strat, dict(a=float(a)), dict(x1=(0.0,), gamma=0.01, K=50))

    def _value(self, X):
        return np.abs(X[:, 0]) + self.params["a"] * X[:, 0]

    def _kinks(self, X):
        return X.copy()

    def _grad(self, X, S):
        return (S[:, 0] + self.params["a"])[:, None]


class TwoLinesDemo(CatalogFunction):
    """Two parallel vertical kink lines with weights that trade off in y."""

    name = "two_lines_demo"

    def __init__(self, c=0.5, lam=1.0, mu=0.1, nu=0.05):
        e2 = [0.0, 1.0]
        strata = [
            AffineStratum([0, 0], [e2], None, "x=0", (0, -1)),
            AffineStratum([c, 0], [e2], None, "x=c", (1, 0)),
            OpenBox([-INF, -INF], [0, INF], "x<0", (-1, -1)),
            OpenBox([0, -INF], [c, INF], "0<x<c", (1, -1)),
            OpenBox([c, -INF], [INF, INF], "x>c", (1, 1)),
        ]
        strat = Stratification(strata, [-2.0, -1.0], [2.0, 8.0])
        super().__init__(strat, dict(c=c, lam=lam, mu=mu, nu=nu), dict(x1=(0.4, 5.5), gamma=0.01, K=5000))

    def _value(self, X):
        p = self.params
        x, y = X[:, 0], X[:, 1]
        s = np.sin(np.pi * y)
        return (0.5 * p["lam"] * (1 + s) * np.abs(x) + 0.5 * p["lam"] * (1 - s) * np.abs(x - p["c"])
                + p["mu"] * x ** 2 + p["nu"] * y ** 2)

    def _kinks(self, X):
        return np.stack([X[:, 0], X[:, 0] - self.params["c"]], axis=1)

    def _grad(self, X, S):
        p = self.params
        x, y = X[:, 0], X[:, 1]
        s = np.sin(np.pi * y)
        gx = 0.5 * p["lam"] * ((1 + s) * S[:, 0] + (1 - s) * S[:, 1]) + 2 * p["mu"] * x
        gy = 0.5 * p["lam"] * np.pi * np.cos(np.pi * y) * (S[:, 0] * x - S[:, 1] * (x - p["c"])) + 2 * p["nu"] * y
        return np.stack([gx, gy], axis=1)


class Ring(CatalogFunction):
    """|x^2 + y^2 - 1| + kappa |p - q|^2: a kink along the unit circle."""

    name = "ring"

    def __init__(self, kappa=0.25, qx=0.5):
        strata = [
            CircleArc([0, 0], 1.0, None, "circle", (0,)),
            RadialRegion([0, 0], None, 1.0, "disk", (-1,)),
            RadialRegion([0, 0], 1.0, INF, "exterior", (1,)),
        ]
        strat = Stratification(strata, [-2.0, -2.0], [2.0, 2.0])
        super().__init__(strat, dict(kappa=kappa, qx=qx), dict(x1=(1.6, 0.9), gamma=0.01, K=2000))

    def _value(self, X):
        p = self.params
        q = np.array([p["qx"], 0.0])
        return np.abs(np.sum(X ** 2, axis=1) - 1) + p["kappa"] * np.sum((X - q) ** 2, axis=1)

    def _kinks(self, X):
        return (np.sum(X ** 2, axis=1) - 1)[:, None]

    def _grad(self, X, S):
        p = self.params
        q = np.array([p["qx"], 0.0])
        return 2 * S[:, :1] * X + 2 * p["kappa"] * (X - q)


CATALOG = {
    "appendix_fig1": AppendixFig1,
    "abs_diff_sq": AbsDiffSq,
    "abs_power": AbsPower,
    "two_lines_demo": TwoLinesDemo,
    "ring": Ring,
    "shifted_kink": ShiftedKink,
}

_CALL = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\((.*)\))?\s*$")


def catalog_names():
    return sorted(CATALOG)


def catalog_get(name: str, *args, **kwargs) -> CatalogFunction:
    """Instantiate a catalog function, e.g. ``catalog_get("abs_power(0.5)")``."""
    m = _CALL.match(name)
    if not m or m.group(1) not in CATALOG:
        raise UnknownFunction(f"unknown function {name!r}; available: {', '.join(catalog_names())}")
    if m.group(2):
        args = tuple(float(a) for a in m.group(2).split(",") if a.strip()) + args
    return CATALOG[m.group(1)](*args, **kwargs)


# Constants estimated by `constants.estimate_constants` (seed 0) and frozen
# with a factor-2 safety margin. Regenerate with `python -m strata_lab.constants`.
DEFAULT_ENTRIES = ["appendix_fig1", "abs_diff_sq", "abs_power", "two_lines_demo", "ring", "shifted_kink"]

FROZEN: dict[str, dict] = {
    "appendix_fig1": dict(G=47.96, L0=1e-06, L1=1e-06, L2=154.1, lambda_lo=0.5, lambda_hi=2.0, A3=0.25),
    "abs_diff_sq": dict(G=6.217, L0=1e-06, L1=1e-06, L2=13.57, lambda_lo=0.5, lambda_hi=2.0, A3=0.25),
    "abs_power(0.5)": dict(G=2.334, L0=1e-06, L1=1e-06, L2=3.609, lambda_lo=0.5, lambda_hi=2.0, A3=0.25),
    "two_lines_demo(0.5,1.0,0.1,0.05)": dict(G=2.327, L0=1e-06, L1=1e-06, L2=6.29, lambda_lo=0.5, lambda_hi=2.0,
                                              A3=0.25),
    "ring(0.25,0.5)": dict(G=7.975, L0=2.658, L1=2.0, L2=11.71, lambda_lo=0.4003, lambda_hi=2.658, A3=0.25),
    "shifted_kink(1.3)": dict(G=2.53, L0=1e-06, L1=1e-06, L2=3.998, lambda_lo=0.5, lambda_hi=2.0, A3=0.25),
}
