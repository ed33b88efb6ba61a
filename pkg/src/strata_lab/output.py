"""Deterministic writers: JSON documents and a small hand-written SVG plot."""

from __future__ import annotations

import json
import math

import numpy as np


def dumps(obj) -> str:
    """JSON with insertion-ordered keys, numpy scalars converted, trailing newline."""
    return json.dumps(_plain(obj), indent=2, allow_nan=True) + "\n"


def _plain(o):
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return [_plain(v) for v in o.tolist()]
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    return o


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


class _Canvas:
    def __init__(self, lo, hi, size=(640, 640), pad=40):
        self.lo, self.hi = np.asarray(lo, float), np.asarray(hi, float)
        self.w, self.h = size
        self.pad = pad
        self.items = []

    def px(self, p):
        u = (p[0] - self.lo[0]) / (self.hi[0] - self.lo[0])
        v = (p[1] - self.lo[1]) / (self.hi[1] - self.lo[1])
        return (self.pad + u * (self.w - 2 * self.pad), self.h - self.pad - v * (self.h - 2 * self.pad))

    def polyline(self, P, color, width=1.0, opacity=1.0):
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in (self.px(p) for p in P))
        self.items.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}" '
                          f'stroke-opacity="{opacity}"/>')

    def circle(self, p, r, color):
        x, y = self.px(p)
        self.items.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{color}"/>')

    def text(self, p, s, size=12):
        x, y = p
        self.items.append(f'<text x="{x:.2f}" y="{y:.2f}" font-size="{size}" font-family="sans-serif">{s}</text>')

    def render(self, title=""):
        frame = (f'<rect x="{self.pad}" y="{self.pad}" width="{self.w - 2 * self.pad}" '
                 f'height="{self.h - 2 * self.pad}" fill="none" stroke="#888"/>')
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">')
        body = [head, '<rect width="100%" height="100%" fill="white"/>', frame] + self.items
        if title:
            body.append(f'<text x="{self.pad}" y="{self.pad - 12}" font-size="14" font-family="sans-serif">{title}</text>')
        return "\n".join(body + ["</svg>"]) + "\n"


def _stratum_path(s, lo, hi, n=200):
    """Polyline approximation of a 1-d stratum inside the box."""
    if s.kind == "affine" and s.dim == 1:
        rng = s._param_range(lo, hi)
        if rng is None:
            return None
        t = np.linspace(rng[0], rng[1], 2)
        return s.a + t[:, None] * s.B[0]
    if s.kind == "circle-arc":
        t0, t1 = s.theta if s.theta is not None else (0.0, 2 * math.pi)
        t = np.linspace(t0, t1, n)
        return s.c + s.radius * np.stack([np.cos(t), np.sin(t)], axis=1)
    return None


def trajectory_svg(strat, traj, sel=None, title="") -> str:
    """Trajectory over the box, coloured by selected stratum, with lower strata drawn."""
    if strat.d == 1:
        K = len(traj.x)
        c = _Canvas([1, strat.lo[0]], [K, strat.hi[0]])
        c.polyline(np.c_[np.arange(1, K + 1), traj.x[:, 0]], _COLORS[0])
        c.text((c.pad, c.h - 10), "k")
        return c.render(title)
    c = _Canvas(strat.lo[:2], strat.hi[:2])
    for s in strat.strata:
        if s.dim == 1:
            P = _stratum_path(s, strat.lo, strat.hi)
            if P is not None:
                c.polyline(P[:, :2], "#999", 1.5)
        elif s.dim == 0:
            c.circle(s.z[:2], 4, "#444")
    X = traj.x[:, :2]
    if sel is None:
        c.polyline(X, _COLORS[0])
    else:
        for sid, a, b in sel.blocks():
            c.polyline(X[a - 1:b + 1], _COLORS[sid % len(_COLORS)], 1.2)
    c.circle(X[0], 3, "black")
    return c.render(title)


def rates_svg(rows, slope=None) -> str:
    """Log-log plot of mean squared gradient norm against K."""
    ok = [r for r in rows if not r.get("rejected")]
    lk = np.log10([r["K"] for r in ok])
    lg = np.log10([max(r["mean_grad_sq"], 1e-300) for r in ok])
    lo = [lk.min() - 0.2, lg.min() - 0.5]
    hi = [lk.max() + 0.2, lg.max() + 0.5]
    c = _Canvas(lo, hi, size=(480, 360))
    c.polyline(np.c_[lk, lg], _COLORS[0], 1.5)
    for p in np.c_[lk, lg]:
        c.circle(p, 3, _COLORS[1])
    title = "mean |grad g|^2 vs K (log-log)"
    if slope is not None:
        title += f", slope {slope:.3f}"
    return c.render(title)
