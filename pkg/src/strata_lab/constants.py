"""Sampling estimates of the regularity constants of a catalog function.

Estimates are lower bounds of suprema (or upper bounds of infima) over
random samples; `freeze` applies the safety margins used by the catalog.
Run ``python -m strata_lab.constants`` to print frozen values.
"""

from __future__ import annotations

import json

import numpy as np

from .neighborhoods import in_wellposed

A3_DEFAULT = 0.25
L_FLOOR = 1e-6


def _grid(strat, n_axis):
    axes = [np.linspace(strat.lo[i], strat.hi[i], n) for i, n in enumerate(n_axis)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, strat.d)


def sup_subgradient(fn, fine: bool = True) -> float:
    """Largest subgradient norm over a dense grid of the box."""
    strat = fn.stratification
    if strat.d == 1:
        X = _grid(strat, [200001 if fine else 20001])
    else:
        n = [2001, 901] if fine else [401, 201]
        n = n + [101] * (strat.d - 2)
        X = _grid(strat, n)
    best = 0.0
    for chunk in np.array_split(X, max(1, len(X) // 200000)):
        best = max(best, float(np.max(np.linalg.norm(fn.subgradient(chunk), axis=1))))
    return best


def _near(strat, Y, scale, rng):
    U = rng.normal(size=Y.shape)
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    return Y + U * (scale * rng.uniform(0, 1, size=len(Y)))[:, None]


def estimate_constants(fn, n: int = 4000, seed: int = 0, A3: float = A3_DEFAULT) -> dict:
    """Raw estimates of G, L0, L1, L2, lambda_lo and lambda_hi."""
    strat = fn.stratification
    rng = np.random.default_rng(seed)
    lam_lo, lam_hi, L0, L1, L2 = np.inf, 0.0, 0.0, 0.0, 0.0
    for s in strat.strata:
        if s.dim == 0:
            continue
        Y = s.sample(n, rng, strat.lo, strat.hi)
        if len(Y) == 0:
            continue
        tr = np.minimum(strat.lower_dist(Y, s.id), 1.0)
        rg = fn.restricted_gradient(s.id, Y, tol=1e-8)
        P = s.jacobian_many(Y)

        # Jacobian spectrum and first-order accuracy on the wellposed region
        if s.dim < strat.d:
            X = _near(strat, Y, A3 * tr, rng)
            ok = in_wellposed(strat, s.id, X, _Shim(A3)) & s.project_many(X)[1]
            X = X[ok]
            Yx = s.project_many(X)[0]
            J = s.jacobian_many(X)
            for xi, yi, Ji in zip(X, Yx, J):
                T = s.tangent_basis(yi)
                sv = np.linalg.svd(T @ Ji @ T.T, compute_uv=False)
                lam_lo = min(lam_lo, float(sv.min()))
                lam_hi = max(lam_hi, float(np.linalg.norm(Ji, 2)))
                r = np.linalg.norm(xi - yi)
                if r > 0:
                    Py = T.T @ T
                    trx = min(float(strat.lower_dist(xi, s.id)), 1.0)
                    L0 = max(L0, float(np.linalg.norm(Ji - Py, 2)) * trx / r)
            # variation of the tangent projector along the stratum
            idx = rng.permutation(len(Y))
            for a, b in zip(range(len(Y)), idx):
                dy = np.linalg.norm(Y[a] - Y[b])
                if dy > 0:
                    Pa, Pb = P[a], P[b]
                    L1 = max(L1, float(np.linalg.norm(Pa - Pb, 2)) * tr[a] / dy)
        else:
            lam_lo, lam_hi = min(lam_lo, 1.0), max(lam_hi, 1.0)

        # gap between projected subgradients and the restricted gradient
        scales = tr * 10.0 ** rng.uniform(-4, 0.5, size=len(Y))
        Xs = [_near(strat, Y, scales, rng), rng.uniform(strat.lo, strat.hi, size=Y.shape)]
        for X in Xs:
            X = np.clip(X, strat.lo, strat.hi)
            V = fn.subgradient(X)
            gap = np.linalg.norm(np.einsum("nij,nj->ni", P, V) - rg, axis=1)
            r = np.linalg.norm(X - Y, axis=1)
            keep = r > 0
            L2 = max(L2, float(np.max(gap[keep] * tr[keep] / r[keep], initial=0.0)))
    if not np.isfinite(lam_lo):
        lam_lo = 1.0
    return {
        "G": sup_subgradient(fn),
        "L0": L0, "L1": L1, "L2": L2,
        "lambda_lo": lam_lo, "lambda_hi": max(lam_hi, lam_lo),
        "A3": A3,
    }


class _Shim:
    """Minimal parameter holder for the wellposed predicate."""

    def __init__(self, A3):
        self.A3 = A3


def freeze(raw: dict) -> dict:
    """Apply margins: 10% on G, factor 2 elsewhere (in the safe direction)."""
    return {
        "G": round(1.1 * raw["G"], 6),
        "L0": max(2 * raw["L0"], L_FLOOR),
        "L1": max(2 * raw["L1"], L_FLOOR),
        "L2": max(2 * raw["L2"], L_FLOOR),
        "lambda_lo": raw["lambda_lo"] / 2,
        "lambda_hi": 2 * raw["lambda_hi"],
        "A3": raw["A3"],
    }


def _round_up(v: float) -> float:
    """Round to 4 significant digits, never downward."""
    if v == 0:
        return 0.0
    e = np.floor(np.log10(abs(v))) - 3
    return float(np.ceil(v / 10 ** e) * 10 ** e)


def _round_down(v: float) -> float:
    e = np.floor(np.log10(abs(v))) - 3
    return float(np.floor(v / 10 ** e) * 10 ** e)


def frozen_table(names, n=4000, seed=0) -> dict:
    from .catalog import catalog_get

    out = {}
    for name in names:
        f = freeze(estimate_constants(catalog_get(name), n=n, seed=seed))
        out[catalog_get(name).label] = {k: (_round_down(v) if k == "lambda_lo" else _round_up(v)) if k != "A3" else v
                                        for k, v in f.items()}
    return out


if __name__ == "__main__":
    from .catalog import DEFAULT_ENTRIES

    print(json.dumps(frozen_table(DEFAULT_ENTRIES), indent=2))
