"""Descent accounting along a selected trajectory.

Each step k contributes a descent term g_{Psi_k}(x_k) - g_{Psi_k}(x_{k+1}),
and each change of stratum a switching term g_{Psi_k}(x_k) - g_{Psi_{k-1}}(x_k).
Steps where a g evaluation falls outside the wellposed neighborhood are
flagged and left out of aggregated inequalities.
"""

from __future__ import annotations

import io

import numpy as np

from .descent import StepSchedule, run
from .neighborhoods import auto_params, corollary_gamma, in_wellposed, membership_table
from .selection import build_selection, build_selection_varying, switch_sets
from .verify import g_many, is_good, is_valid

LEDGER_COLUMNS = [
    "k", "stratum", "dim", "rank", "gamma", "g", "g_next", "grad_sq", "descent", "switching",
    "proj_jump", "proximity_sq", "dist", "certificate", "wellposed", "usable",
    "lemma_hyp", "lemma_ok", "excluded",
]

_TOL = 1e-10


def _by_stratum(assign, fn_eval):
    """Call fn_eval(sid, rows) for each stratum present in `assign`."""
    for sid in np.unique(assign):
        fn_eval(int(sid), np.flatnonzero(assign == sid))


def payments(sel, dist_cur, dist_prev):
    """P_L and P_R over k in [2, K-1], plus the k = K terms reported separately.

    dist_cur[k-1] = dist(x_k, Psi_k), dist_prev[k-1] = dist(x_k, Psi_{k-1}).
    """
    K = sel.K
    left, right = switch_sets(sel.assignments, sel.dims)
    is_l = np.zeros(K + 2, bool)
    is_r = np.zeros(K + 2, bool)
    for ks in left.values():
        is_l[ks] = True
    for ks in right.values():
        is_r[ks] = True
    PL = PR = extra = 0.0
    for k in range(2, K + 1):
        tl = dist_cur[k - 1] if is_l[k] else 0.0
        tr = dist_prev[k - 1] if is_r[k - 1] else 0.0
        if k <= K - 1:
            PL += tl
            PR += tr
        else:
            extra += tl + tr
    return {"P_L": float(PL), "P_R": float(PR), "boundary": float(extra)}


def switch_count_bound(sel, params, gammas, nbhd_gamma=None):
    """Per stratum: numbers of left/right switches and the bound 4 G sum(gamma) / g^(alpha + r beta)."""
    left, right = switch_sets(sel.assignments, sel.dims)
    g = params.gamma if nbhd_gamma is None else float(np.min(nbhd_gamma))
    ranks = _ranks(sel.dims)
    out = {}
    for X in left:
        bound = 4 * params.G * float(np.sum(gammas)) / g ** (params.alpha + ranks[X] * params.beta)
        out[X] = {"left": len(left[X]), "right": len(right[X]), "bound": bound,
                  "ok": len(left[X]) <= bound and len(right[X]) <= bound}
    return out


def _ranks(dims):
    active = sorted(set(int(d) for d in dims))
    return [active.index(int(d)) for d in dims]


def descent_ledger(fn, traj, sel, params, nbhd_gamma=None) -> dict:
    """Per-step records and the aggregated checks for one trajectory.

    `nbhd_gamma` gives the step used for the neighborhoods at each k (it
    differs from the actual step only with varying schedules).
    """
    strat = fn.stratification
    K = sel.K
    X = traj.x
    a = np.asarray(sel.assignments)
    gam = np.asarray(traj.gamma[:K], float)
    ng = np.full(K, params.gamma) if nbhd_gamma is None else np.asarray(nbhd_gamma, float)
    dims, ranks = strat.dims[a], strat.ranks[a]

    g_cur = np.full(K, np.nan)
    g_next = np.full(K, np.nan)
    grad = np.full((K, strat.d), np.nan)
    proj = np.full((K, strat.d), np.nan)
    wp_cur = np.zeros(K, bool)
    wp_next = np.zeros(K, bool)
    dist_cur = np.zeros(K)
    lower = np.ones(K)
    seg_ok = np.zeros(K, bool)

    def eval_cur(sid, rows):
        v, gr, Y, wp, _ = g_many(fn, sid, X[rows], params)
        g_cur[rows], grad[rows], proj[rows], wp_cur[rows] = v, gr, Y, wp
        vn, _, _, wpn, _ = g_many(fn, sid, X[rows + 1], params)
        g_next[rows], wp_next[rows] = vn, wpn
        dist_cur[rows] = strat[sid].dist(X[rows])
        lower[rows] = strat.lower_dist(X[rows], sid)
        ok = wp.copy()
        for t in (0.25, 0.5, 0.75, 1.0):
            P = X[rows] + t * (X[rows + 1] - X[rows])
            ok &= in_wellposed(strat, sid, P, params) & strat[sid].project_many(P)[1]
        seg_ok[rows] = ok

    _by_stratum(a, eval_cur)

    # switching terms, evaluated with the previous stratum at the current point
    switch = np.zeros(K, bool)
    switch[1:] = a[1:] != a[:-1]
    g_prev = np.full(K, np.nan)
    proj_prev = np.full((K, strat.d), np.nan)
    wp_prev = np.ones(K, bool)
    dist_prev = dist_cur.copy()
    idx = np.flatnonzero(switch)
    prev_sid = a[idx - 1]

    def eval_prev(sid, sub):
        rows = idx[sub]
        v, _, Y, wp, _ = g_many(fn, sid, X[rows], params)
        g_prev[rows], proj_prev[rows], wp_prev[rows] = v, Y, wp
        dist_prev[rows] = strat[sid].dist(X[rows])

    if len(idx):
        _by_stratum(prev_sid, eval_prev)
    switching = np.where(switch, g_cur - g_prev, 0.0)
    proj_jump = np.where(switch, np.linalg.norm(proj - proj_prev, axis=1), 0.0)

    grad_sq = np.sum(grad ** 2, axis=1)
    descent = g_cur - g_next
    top = dims == strat.d
    prox = np.where(top, 0.0, dist_cur / np.minimum(lower, 1.0))
    proximity_sq = prox ** 2
    cert = dist_cur <= ng ** (params.alpha + ranks * params.beta) * (1 + 1e-12)

    usable = wp_cur & wp_next & np.isfinite(descent) & np.isfinite(grad_sq)
    excluded = np.array(["" if u else ("g(x_k)" if not wp_cur[i] else "g(x_k+1)") for i, u in enumerate(usable)],
                        dtype=object)
    switch_usable = switch & wp_prev & wp_cur

    # per-step descent lemma, at non-switch steps where its hypotheses hold
    same_next = np.ones(K, bool)
    same_next[:-1] = a[1:] == a[:-1]
    lemma_hyp = same_next & seg_ok & (gam * params.descent_factor <= lower) & (4 * params.A3 <= 1)
    lemma_rhs = -gam * params.A1 * grad_sq + gam * params.A2 * proximity_sq
    lemma_ok = np.where(lemma_hyp, (g_next - g_cur) <= lemma_rhs + _TOL * (1 + np.abs(g_cur)), True)

    # aggregated inequalities
    lhs = params.A1 * float(np.sum((gam * grad_sq)[usable]))
    budget_prox = params.A2 * float(np.sum((gam * ng ** (2 * params.alpha))[usable]))
    rhs_terms = float(np.sum(descent[usable])) + budget_prox
    full = None
    if usable.all() and switch_usable[idx].all():
        delta = float(g_cur[0] - g_next[K - 1])
        swsum = float(np.sum(switching[1:]))
        full = {"delta": delta, "switching": swsum, "prox_budget": budget_prox,
                "rhs": delta + swsum + budget_prox, "lhs": lhs, "ok": lhs <= delta + swsum + budget_prox + _TOL}

    pay = payments(sel, dist_cur, dist_prev)
    sw_total = float(np.sum(switching[switch_usable]))
    four_g = 4 * params.G
    pay_bound = four_g * (pay["P_L"] + pay["P_R"] + pay["boundary"])
    per_switch_first = switching[switch_usable] <= params.G * proj_jump[switch_usable] + _TOL
    lower_cur = dims <= np.r_[dims[0], dims[:-1]]
    upper_cur = dims >= np.r_[dims[0], dims[:-1]]
    four_bound = four_g * (dist_cur * lower_cur + dist_prev * upper_cur)
    per_switch_second = (params.G * proj_jump <= four_bound + _TOL)[switch_usable]
    beta_alpha = params.beta - params.alpha
    budget = 64 * len(strat) * params.G ** 2 * float(np.sum(gam * ng ** beta_alpha))

    counts = switch_count_bound(sel, params, gam, ng)
    rows = {
        "k": np.arange(1, K + 1), "stratum": a, "dim": dims, "rank": ranks, "gamma": gam,
        "g": g_cur, "g_next": g_next, "grad_sq": grad_sq, "descent": descent, "switching": switching,
        "proj_jump": proj_jump, "proximity_sq": proximity_sq, "dist": dist_cur, "certificate": cert,
        "wellposed": wp_cur, "usable": usable, "lemma_hyp": lemma_hyp, "lemma_ok": lemma_ok, "excluded": excluded,
    }
    summary = {
        "K": K,
        "excluded": int(np.sum(~usable)),
        "excluded_fraction": float(np.mean(~usable)),
        "switch_rows_excluded": int(np.sum(switch & ~switch_usable)),
        "valid_descent": {"lhs": lhs, "rhs": rhs_terms, "ok": lhs <= rhs_terms + _TOL},
        "valid_descent_full": full,
        "payments": {**pay, "switching_sum": sw_total, "bound": pay_bound, "ok": sw_total <= pay_bound + _TOL,
                     "per_switch_projection_ok": bool(np.all(per_switch_first)),
                     "per_switch_distance_ok": bool(np.all(per_switch_second)),
                     "rate_budget": budget, "rate_budget_ok": four_g * (pay["P_L"] + pay["P_R"]) <= budget},
        "lemma": {"hypothesis_held": int(np.sum(lemma_hyp)), "violations": int(np.sum(~lemma_ok)),
                  "first_violation": None if lemma_ok.all() else int(np.flatnonzero(~lemma_ok)[0]) + 1},
        "switch_counts": {str(k): v for k, v in counts.items()},
        "switch_counts_ok": all(v["ok"] for v in counts.values()),
        "certificate_rate": float(np.mean(cert)),
        "mean_grad_sq": float(np.nanmean(grad_sq)),
        "boundary_switches": {"left_at_K": bool(switch[K - 1] and dims[K - 1] <= dims[K - 2]) if K > 1 else False},
    }
    return {"rows": rows, "summary": summary}


def ledger_csv(ledger: dict) -> str:
    rows = ledger["rows"]
    buf = io.StringIO()
    buf.write(",".join(LEDGER_COLUMNS) + "\n")
    n = len(rows["k"])

    def fmt(v):
        if isinstance(v, (bool, np.bool_)):
            return "1" if v else "0"
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, str):
            return v
        return repr(float(v))

    for i in range(n):
        buf.write(",".join(fmt(rows[c][i]) for c in LEDGER_COLUMNS) + "\n")
    return buf.getvalue()


def analyze(fn, traj, params, sel=None):
    """Selection (if not given), validity, goodness and ledger for one trajectory."""
    tab = membership_table(fn.stratification, traj.x[:traj.K], params)
    if sel is None:
        sel = build_selection(tab)
    valid, vinfo = is_valid(tab, sel)
    good, ginfo = is_good(tab, sel)
    led = descent_ledger(fn, traj, sel, params)
    return {"selection": sel, "table": tab, "valid": valid, "valid_info": vinfo, "good": good,
            "good_info": ginfo, "ledger": led}


def rate_report(fn, Ks, x1=None, gamma0: float = 1.0) -> dict:
    """Run the corollary step rule for each horizon K and summarize."""
    Ks = [int(k) for k in Ks]
    if not Ks:
        raise ValueError("empty list of horizons")
    x1 = fn.reference["x1"] if x1 is None else x1
    R = fn.stratification.R
    rows = []
    for K in Ks:
        gamma = corollary_gamma(K, R)
        if not gamma < gamma0:
            rows.append({"K": K, "gamma": gamma, "rejected": True})
            continue
        p = auto_params(fn, gamma, gamma0)
        traj = run(fn, x1, StepSchedule.constant(gamma, gamma0), K)
        res = analyze(fn, traj, p)
        s = res["ledger"]["summary"]
        rows.append({"K": K, "gamma": gamma, "rejected": False, "escaped": traj.escaped,
                     "mean_grad_sq": s["mean_grad_sq"], "certificate_rate": s["certificate_rate"],
                     "valid": res["valid"], "good": res["good"]})
    ok = [r for r in rows if not r["rejected"]]
    slope = None
    if len(ok) >= 2:
        lk = np.log([r["K"] for r in ok])
        lg = np.log([max(r["mean_grad_sq"], 1e-300) for r in ok])
        slope = float(np.polyfit(lk, lg, 1)[0])
    means = [r["mean_grad_sq"] for r in ok]
    # smallest C with mean grad-sq <= C K^(-2/(3R+8)) on every horizon
    expo = 2 / (3 * R + 8)
    fitted_C = max((r["mean_grad_sq"] * r["K"] ** expo for r in ok), default=None)
    return {
        "rows": rows,
        "slope": slope,
        "predicted_slope": -expo,
        "fitted_C": fitted_C,
        "strictly_decreasing": all(b < a for a, b in zip(means, means[1:])),
        "certificate_rate": min((r["certificate_rate"] for r in ok), default=None),
    }


def tail_diameter(P, chunk: int = 1024) -> float:
    """Largest pairwise distance among the rows of P."""
    P = np.asarray(P, float)
    best = 0.0
    for i in range(0, len(P), chunk):
        A = P[i:i + chunk]
        D = np.sqrt(np.maximum(np.sum(A ** 2, 1)[:, None] + np.sum(P ** 2, 1)[None] - 2 * A @ P.T, 0))
        best = max(best, float(D.max()))
    return best


def kl_monitor(fn, traj, schedule, base_params, tail: int = 10000) -> dict:
    """Monitor the two partial sums used for convergence with vanishing steps.

    S1 = sum |proj_{Psi_{k+1}}(x_{k+1}) - proj_{Psi_k}(x_{k+1})|,
    S2 = sum gamma_k |grad g_{Psi_k}(x_k)|, plus the diameter of the last
    `tail` iterates.
    """
    strat = fn.stratification
    K = traj.K
    sel, used = build_selection_varying(strat, traj, schedule, base_params)
    a = sel.assignments
    X = traj.x
    gnorm = np.full(K, np.nan)
    proj_self = np.full((K, strat.d), np.nan)  # proj_{Psi_k}(x_{k+1})
    proj_here = np.full((K, strat.d), np.nan)  # proj_{Psi_k}(x_k)

    def ev(sid, rows):
        _, gr, Y, _, _ = g_many(fn, sid, X[rows], base_params)
        gnorm[rows] = np.linalg.norm(gr, axis=1)
        proj_here[rows] = Y
        proj_self[rows] = strat[sid].project_many(X[rows + 1])[0]

    _by_stratum(a, ev)
    jumps = np.zeros(K)
    ch = np.flatnonzero(a[1:] != a[:-1])  # Psi_{k+1} != Psi_k at 0-based k
    jumps[ch] = np.linalg.norm(proj_here[ch + 1] - proj_self[ch], axis=1)
    s2_terms = traj.gamma * gnorm
    nan1, nan2 = int(np.sum(~np.isfinite(jumps))), int(np.sum(~np.isfinite(s2_terms)))
    S1 = np.nancumsum(jumps)
    S2 = np.nancumsum(s2_terms)
    t = min(tail, K)
    return {
        "K": K,
        "tail": t,
        "S1_total": float(S1[-1]),
        "S2_total": float(S2[-1]),
        "S1_tail_increment": float(S1[-1] - S1[K - t - 1]) if K > t else float(S1[-1]),
        "S2_tail_increment": float(S2[-1] - S2[K - t - 1]) if K > t else float(S2[-1]),
        "tail_oscillation": tail_diameter(X[K + 1 - t:K + 1]),
        "nonfinite_terms": nan1 + nan2,
        "intervals": len(used),
        "final_stratum": int(a[-1]),
        "x_final": X[-1].tolist(),
    }


def varying_ledger(fn, traj, schedule, base_params) -> dict:
    """Accounting with parameters frozen on doubling intervals.

    The constant C of the aggregated bound is reported as the smallest
    value that makes it hold on this run.
    """
    strat = fn.stratification
    sel, used = build_selection_varying(strat, traj, schedule, base_params)
    K = traj.K
    ng = np.empty(K)
    starts = []
    for (a, b), p in used:
        ng[a - 1:b] = p.gamma
        starts.append(a)
    led = descent_ledger(fn, traj, sel, base_params, nbhd_gamma=ng)
    rows, s = led["rows"], led["summary"]
    u = rows["usable"]
    gam = rows["gamma"]
    p = base_params
    lhs = p.A1 * float(np.sum((gam * rows["grad_sq"])[u]))
    delta_terms = float(np.sum(rows["descent"][u]))
    prox = p.A2 * float(np.sum((gam * ng ** (2 * p.alpha))[u]))
    payment_terms = p.G ** 2 * len(strat) * float(np.sum(gam ** (1 + p.beta - p.alpha))) + p.G * gam[0] ** p.beta
    c_fit = max(0.0, (lhs - delta_terms - prox) / payment_terms)
    sw = rows["switching"]
    boundary = np.zeros(K, bool)
    boundary[np.array(starts[1:], int) - 1] = True
    return {
        "intervals": [[a, b, q.gamma] for (a, b), q in used],
        "lhs": lhs,
        "descent_sum": delta_terms,
        "prox_budget": prox,
        "payment_terms": payment_terms,
        "fitted_C": c_fit,
        "switching_inside": float(np.sum(sw[~boundary & u])),
        "switching_at_boundaries": float(np.sum(sw[boundary & u])),
        "payments_projection_ok": s["payments"]["per_switch_projection_ok"],
        "summary": s,
        "selection": sel,
        "ledger": led,
    }


def stationarity_measure(fn, traj, sel, params) -> dict:
    """eps_k = |restricted gradient at proj(x_k)| and delta_k = dist(x_k, Psi_k).

    Also checks eps_k <= |grad g(x_k)| / lambda_lo, which follows from the
    Jacobian lower bound.
    """
    strat = fn.stratification
    K = sel.K
    a = sel.assignments
    X = traj.x[:K]
    eps = np.full(K, np.nan)
    dlt = np.zeros(K)
    gn = np.full(K, np.nan)

    def ev(sid, rows):
        _, gr, Y, _, ok = g_many(fn, sid, X[rows], params)
        gn[rows] = np.linalg.norm(gr, axis=1)
        r = rows[ok]
        if len(r):
            eps[r] = np.linalg.norm(fn.restricted_gradient(sid, Y[ok], tol=1e-6), axis=1)
        dlt[rows] = strat[sid].dist(X[rows])

    _by_stratum(a, ev)
    fin = np.isfinite(eps) & np.isfinite(gn)
    bound_ok = eps[fin] <= gn[fin] / params.lambda_lo * (1 + 1e-9) + 1e-12
    return {"eps": eps, "delta": dlt, "grad_norm": gn, "bound_ok": bool(np.all(bound_ok)),
            "eps_final": float(eps[-1]), "delta_final": float(dlt[-1])}


def estimate_constants(fn, n: int = 4000, seed: int = 0, margin: bool = True) -> dict:
    """Sampled constants, with the catalog safety margins unless `margin` is False."""
    from . import constants

    raw = constants.estimate_constants(fn, n=n, seed=seed)
    return constants.freeze(raw) if margin else raw


def finite_difference_check(fn, sid, x, params, h: float = 1e-6) -> float:
    """Relative error between g_grad and central differences of g_value."""
    from .verify import g_grad, g_value

    x = np.asarray(x, float)
    g = g_grad(fn, sid, x, params, guard=False)
    fd = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        fd[i] = (g_value(fn, sid, x + e, params, guard=False) - g_value(fn, sid, x - e, params, guard=False)) / (2 * h)
    return float(np.linalg.norm(fd - g) / max(1.0, np.linalg.norm(g)))


__all__ = [
    "analyze", "descent_ledger", "estimate_constants", "finite_difference_check", "kl_monitor", "ledger_csv",
    "payments", "rate_report", "stationarity_measure", "switch_count_bound", "tail_diameter", "varying_ledger",
]
