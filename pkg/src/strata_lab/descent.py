"""Subgradient iteration x_{k+1} = x_k - gamma_k v_k and step-size schedules."""

from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np


class ScheduleError(ValueError):
    pass


class StepSchedule:
    """Step sizes gamma_k for k = 1, 2, ...

    kinds: ``constant`` (gamma_k = c), ``inverse_k`` (gamma_k = c / k) and
    ``explicit`` (a given list). Every step must lie in (0, gamma0).
    """

    def __init__(self, kind: str, c: float | None = None, values=None, gamma0: float = 1.0):
        if kind not in ("constant", "inverse_k", "explicit"):
            raise ScheduleError(f"unknown schedule kind {kind!r}")
        self.kind = kind
        self.c = None if c is None else float(c)
        self.values = None if values is None else np.asarray(values, dtype=float)
        self.gamma0 = float(gamma0)
        if kind == "explicit":
            if self.values is None or self.values.ndim != 1 or len(self.values) == 0:
                raise ScheduleError("explicit schedule needs a non-empty list of steps")
            top = float(self.values.max())
            low = float(self.values.min())
        else:
            if self.c is None:
                raise ScheduleError(f"{kind} schedule needs c")
            top = low = self.c
        if not low > 0:
            raise ScheduleError("step sizes must be positive")
        if not top < self.gamma0:
            raise ScheduleError(f"step size {top} is not below the ceiling gamma0 = {self.gamma0}")

    @classmethod
    def constant(cls, gamma, gamma0=1.0):
        return cls("constant", c=gamma, gamma0=gamma0)

    @classmethod
    def inverse_k(cls, c, gamma0=1.0):
        return cls("inverse_k", c=c, gamma0=gamma0)

    @classmethod
    def explicit(cls, values, gamma0=1.0):
        return cls("explicit", values=values, gamma0=gamma0)

    def __call__(self, k: int) -> float:
        if k < 1:
            raise ScheduleError("steps are indexed from 1")
        if self.kind == "constant":
            return self.c
        if self.kind == "inverse_k":
            return self.c / k
        if k > len(self.values):
            raise ScheduleError(f"explicit schedule has no step {k}")
        return float(self.values[k - 1])

    def steps(self, K: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(K, self.c)
        if self.kind == "inverse_k":
            return self.c / np.arange(1, K + 1)
        if K > len(self.values):
            raise ScheduleError(f"explicit schedule has {len(self.values)} steps, {K} requested")
        return self.values[:K].copy()

    def has(self, k: int) -> bool:
        return self.kind != "explicit" or 1 <= k <= len(self.values)

    def interval_gamma(self, b: int) -> float:
        """Step frozen on a doubling interval ending at b: gamma_{b+1} when defined."""
        return self(b + 1) if self.has(b + 1) else self(b)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "gamma0": self.gamma0}
        if self.kind == "explicit":
            out["values"] = self.values.tolist()
        else:
            out["c"] = self.c
        return out

    @classmethod
    def from_dict(cls, rec: dict) -> "StepSchedule":
        return cls(rec["kind"], rec.get("c"), rec.get("values"), rec.get("gamma0", 1.0))


def doubling_intervals(schedule: StepSchedule, K: int, k1: int = 1):
    """Split [k1, K] at the indices where the step has halved.

    k(i+1) is the first k >= k(i) with gamma_k <= gamma_{k(i)} / 2. The
    intervals [k(i), k(i+1) - 1] partition [k1, K]; the last ends at K.
    """
    g = schedule.steps(K)
    if np.any(np.diff(g[k1 - 1:]) > 0):
        raise ScheduleError("doubling intervals need a non-increasing schedule")
    starts = [k1]
    ref = g[k1 - 1]
    for k in range(k1 + 1, K + 1):
        if g[k - 1] <= ref / 2:
            starts.append(k)
            ref = g[k - 1]
    ends = [s - 1 for s in starts[1:]] + [K]
    return list(zip(starts, ends))


@dataclass
class Trajectory:
    """Iterates x_1..x_{K+1}, subgradients v_1..v_K and steps gamma_1..gamma_K."""

    x: np.ndarray
    v: np.ndarray
    gamma: np.ndarray
    escaped: bool = False
    clipped: int = 0
    function: str = ""
    config_hash: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.gamma)

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def to_csv(self) -> str:
        d = self.d
        head = ["k"] + [f"x_{i}" for i in range(1, d + 1)] + [f"v_{i}" for i in range(1, d + 1)] + ["gamma"]
        buf = io.StringIO()
        buf.write(",".join(head) + "\n")
        for k in range(self.K):
            row = [str(k + 1)] + [repr(float(t)) for t in self.x[k]] + [repr(float(t)) for t in self.v[k]]
            row.append(repr(float(self.gamma[k])))
            buf.write(",".join(row) + "\n")
        last = [str(self.K + 1)] + [repr(float(t)) for t in self.x[self.K]] + [""] * (d + 1)
        buf.write(",".join(last) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Trajectory":
        lines = [ln for ln in text.strip().splitlines() if ln]
        head = lines[0].split(",")
        d = sum(1 for h in head if h.startswith("x_"))
        if head != ["k"] + [f"x_{i}" for i in range(1, d + 1)] + [f"v_{i}" for i in range(1, d + 1)] + ["gamma"]:
            raise ValueError("unexpected trajectory header")
        xs, vs, gs = [], [], []
        for i, ln in enumerate(lines[1:]):
            f = ln.split(",")
            if int(f[0]) != i + 1:
                raise ValueError(f"row {i + 1} has index {f[0]}")
            xs.append([float(t) for t in f[1:1 + d]])
            if i < len(lines) - 2:
                vs.append([float(t) for t in f[1 + d:1 + 2 * d]])
                gs.append(float(f[1 + 2 * d]))
            elif any(f[1 + d:]):
                raise ValueError("the final row must leave v and gamma empty")
        return cls(np.array(xs), np.array(vs).reshape(-1, d), np.array(gs))


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def run(fn, x1, schedule: StepSchedule, K: int, projected: bool = False) -> Trajectory:
    """Run K subgradient steps of catalog function `fn` from x1.

    Leaving the box stops the run and sets `escaped` (the escaping iterate
    is kept as the last one). With ``projected=True`` iterates are clipped
    back into the box instead and the number of clips is recorded.
    """
    if K < 1:
        raise ValueError("K must be positive")
    strat = fn.stratification
    x = np.asarray(x1, dtype=float).copy()
    if x.shape != (strat.d,):
        raise ValueError(f"x1 must have shape ({strat.d},)")
    if not strat.in_box(x):
        raise ValueError("x1 lies outside the box")
    gam = schedule.steps(K)
    xs = np.empty((K + 1, strat.d))
    vs = np.empty((K, strat.d))
    xs[0] = x
    escaped, clipped, n = False, 0, K
    lo, hi = strat.lo, strat.hi
    for k in range(K):
        v = fn._grad(x[None], np.sign(fn._kinks(x[None])))[0]
        vs[k] = v
        x = x - gam[k] * v
        if np.any(x < lo) or np.any(x > hi):
            if projected:
                x = np.clip(x, lo, hi)
                clipped += 1
            else:
                xs[k + 1] = x
                escaped, n = True, k + 1
                break
        xs[k + 1] = x
    cfg = {"function": fn.label, "x1": [float(t) for t in np.asarray(x1, float)], "schedule": schedule.to_dict(),
           "K": K, "projected": projected}
    return Trajectory(xs[:n + 1], vs[:n], gam[:n].copy(), escaped, clipped, fn.label, config_hash(cfg), cfg)
