"""Acceptance checks; each test records one PASS/FAIL line for its criterion."""

import time

import numpy as np
import pytest

from strata_lab.accounting import analyze, finite_difference_check, kl_monitor, rate_report
from strata_lab.catalog import DEFAULT_ENTRIES, catalog_get
from strata_lab.descent import StepSchedule, run
from strata_lab.hull import min_norm_hull, spurious_ledger_variant
from strata_lab.neighborhoods import auto_params, corollary_gamma, geom_sweep, in_wellposed, theory_params
from strata_lab.selection import build_selection
from strata_lab.strata import CircleArc

from conftest import SUITE, golden_cases, load_golden, record

X1 = [0.4, 5.5]


# ------------------------------------------------------------------ 1

def test_criterion_1_fig1_reproduction(fig1):
    t0 = time.perf_counter()
    traj = run(fig1, X1, StepSchedule.constant(0.01), 5000)
    res = analyze(fig1, traj, auto_params(fig1, 0.01))
    elapsed = time.perf_counter() - t0
    strat = fig1.stratification
    right_line = next(s.id for s in strat.strata if s.name == "x=c,y>0")
    left_line = next(s.id for s in strat.strata if s.name == "x=0,y>0")
    tab = res["table"]
    visits = bool(tab.outer[:, right_line].any() and tab.outer[:, left_line].any())
    blocks = res["selection"].blocks()
    lines = [(i, b[0]) for i, b in enumerate(blocks) if b[0] in (right_line, left_line)]
    # an upward switch between a block of one line and the next block of the other
    upward = 0
    for (i, s), (j, t) in zip(lines, lines[1:]):
        if s != t and any(strat.dims[blocks[m][0]] > 1 for m in range(i + 1, j)):
            upward += 1
    n_r = sum(1 for _, s in lines if s == right_line)
    n_l = sum(1 for _, s in lines if s == left_line)
    ok = visits and n_r >= 1 and n_l >= 1 and upward >= 1 and elapsed < 5 and res["valid"] and res["good"]
    assert record(1, ok, f"blocks on x=c: {n_r}, on x=0: {n_l}, upward switches between them: {upward}, "
                         f"valid={res['valid']} good={res['good']}, {elapsed:.2f}s")


# ------------------------------------------------------------------ 2, 4, 5

@pytest.fixture(scope="module")
def random_runs():
    """100 trajectories: 20 random starts in the box for each of five functions, K = 2000."""
    rng = np.random.default_rng(2024)
    K = 2000
    out = []
    t0 = time.perf_counter()
    for name in SUITE:
        fn = catalog_get(name)
        strat = fn.stratification
        gamma = corollary_gamma(K, strat.R)
        p = auto_params(fn, gamma)
        for _ in range(20):
            x1 = rng.uniform(strat.lo, strat.hi)
            traj = run(fn, x1, StepSchedule.constant(gamma), K)
            out.append((name, x1, traj, analyze(fn, traj, p)))
    return out, time.perf_counter() - t0


def test_criterion_2_selection_valid_and_good(random_runs):
    runs, elapsed = random_runs
    bad = [(n, x.tolist()) for n, x, t, r in runs if t.escaped or not (r["valid"] and r["good"])]
    ok = len(runs) == 100 and not bad and elapsed < 60
    assert record(2, ok, f"{len(runs)} runs, {len(bad)} invalid or not good, {elapsed:.1f}s")


def test_criterion_4_descent_accounting(random_runs):
    runs, _ = random_runs
    fails = []
    excluded = steps = lemma_rows = 0
    worst = 0.0
    for name, x1, traj, res in runs:
        s = res["ledger"]["summary"]
        if not (s["valid_descent"]["ok"] and s["payments"]["ok"] and s["lemma"]["violations"] == 0):
            fails.append((name, x1.tolist()))
        excluded += s["excluded"]
        steps += s["K"]
        lemma_rows += s["lemma"]["hypothesis_held"]
        worst = max(worst, s["excluded_fraction"])
    frac = excluded / steps
    ok = not fails and frac <= 0.01
    assert record(4, ok, f"{len(fails)} runs failing an inequality, lemma checked on {lemma_rows} steps, "
                         f"excluded {frac:.2%} of steps overall (worst single run {worst:.1%})")


def test_criterion_5_switch_counts(random_runs):
    runs, _ = random_runs
    fails = [(n, x.tolist()) for n, x, t, r in runs if not r["ledger"]["summary"]["switch_counts_ok"]]
    most = max(max(max(c["left"], c["right"]) for c in r["ledger"]["summary"]["switch_counts"].values())
               for *_, r in runs)
    assert record(5, not fails, f"{len(fails)} runs over the bound, largest per-stratum count {most}")


# ------------------------------------------------------------------ 3

def test_criterion_3_geometric_items():
    total_fail = 0
    hyp = {}
    for name in SUITE:
        fn = catalog_get(name)
        counts = geom_sweep(fn, theory_params(fn), n=10_000, seed=1)
        total_fail += sum(c["failures"] for c in counts.values())
        hyp[name] = min(c["hypothesis"] for c in counts.values())
    ok = total_fail == 0 and min(hyp.values()) > 0
    assert record(3, ok, f"{total_fail} counterexamples over 5 x 10^4 samples; "
                         f"fewest hypothesis hits for one item: {min(hyp.values())}")


# ------------------------------------------------------------------ 6

def _wellposed_points(fn, p, n, rng, margin=1e-4):
    """n (point, stratum) pairs in wellposed neighborhoods, away from kinks by `margin`."""
    strat = fn.stratification
    pts = []
    while len(pts) < n:
        s = strat[int(rng.integers(len(strat)))]
        if s.dim == strat.d:
            x = rng.uniform(strat.lo, strat.hi)
            if not s.contains(x) or strat.skeleton_dist(x, strat.d - 1) < margin:
                continue
        else:
            y = s.sample(1, rng, strat.lo, strat.hi)[0]
            if s.dim > 0 and strat.lower_dist(y, s.id) < 10 * margin:
                continue
            u = rng.normal(size=strat.d)
            reach = p.A3 * min(1.0, float(strat.lower_dist(y, s.id)))
            x = y + u / np.linalg.norm(u) * reach * rng.uniform(0, 0.9)
            ball = x + 1e-6 * np.vstack([np.eye(strat.d), -np.eye(strat.d)])
            if not (in_wellposed(strat, s.id, ball, p).all() and s.project_many(ball)[1].all()):
                continue
            if isinstance(s, CircleArc) and np.linalg.norm(x - s.c) < 1e-3:
                continue
        pts.append((x, s.id))
    return pts


def test_criterion_6_gradient_oracle():
    rng = np.random.default_rng(6)
    worst = {}
    for name in DEFAULT_ENTRIES:
        fn = catalog_get(name)
        p = auto_params(fn, 0.01)
        errs = [finite_difference_check(fn, sid, x, p) for x, sid in _wellposed_points(fn, p, 500, rng)]
        worst[name] = max(errs)
    circle = CircleArc([0, 0], 1.0)
    jac_err = 0.0
    for x, factor in [((1.5, 0.0), 1 / 1.5), ((0.0, 0.5), 1 / 0.5), ((-0.3, -0.4), 1 / 0.5),
                      ((1e-3, 0.0), 1e3), ((0.0, -2.0), 0.5)]:
        y = circle.project(x)
        P = circle.tangent_projector(y).matrix
        jac_err = max(jac_err, float(np.abs(circle.projection_jacobian(x) - factor * P).max()) / factor)
    ok = max(worst.values()) <= 1e-6 and jac_err <= 1e-8
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert record(6, ok, f"worst relative FD error: {detail}; circle Jacobian error {jac_err:.1e}")


# ------------------------------------------------------------------ 7

def test_criterion_7_rate_trend(fig1):
    rep = rate_report(fig1, [2000, 8000, 32000], x1=X1)
    means = [r["mean_grad_sq"] for r in rep["rows"]]
    ok = rep["strictly_decreasing"] and rep["certificate_rate"] == 1.0 and rep["slope"] <= 0
    assert record(7, ok, f"mean grad-sq {', '.join(f'{m:.4f}' for m in means)}; slope {rep['slope']:+.3f} "
                         f"(predicted {rep['predicted_slope']:.3f}); certificate rate {rep['certificate_rate']:.3f}; "
                         f"fitted C {rep['fitted_C']:.3f}")


# ------------------------------------------------------------------ 8

def test_criterion_8_kl_monitor(fig1):
    t0 = time.perf_counter()
    sched = StepSchedule.inverse_k(0.01)
    traj = run(fig1, X1, sched, 100_000)
    rep = kl_monitor(fig1, traj, sched, auto_params(fig1, 0.01), tail=10_000)
    elapsed = time.perf_counter() - t0
    ok = (not traj.escaped and rep["tail_oscillation"] <= 1e-3 and rep["S1_tail_increment"] <= 1e-4
          and rep["S2_tail_increment"] <= 1e-4 and elapsed < 30)
    assert record(8, ok, f"tail oscillation {rep['tail_oscillation']:.2e}, S1 tail increment "
                         f"{rep['S1_tail_increment']:.2e}, S2 tail increment {rep['S2_tail_increment']:.2e}, "
                         f"{elapsed:.1f}s")


# ------------------------------------------------------------------ 9

def test_criterion_9_golden_tables():
    names = golden_cases()
    mismatched = [n for n in names if build_selection(load_golden(n)[0]).to_json() != load_golden(n)[1]]
    needed = ["no_entry", "left_corner", "right_corner", "tie_break_equal", "skipped_dimension", "reentry"]
    covered = all(n in names for n in needed)
    ok = len(names) >= 12 and covered and not mismatched
    assert record(9, ok, f"{len(names)} golden tables, {len(mismatched)} mismatches")


# ------------------------------------------------------------------ 10

def test_criterion_10_spurious_variant():
    hull_err = max(
        float(np.abs(min_norm_hull([[1.0, 0.0], [-1.0, 0.0]]) - [0.0, 0.0]).max()),
        float(np.abs(min_norm_hull([[3.0, 4.0]]) - [3.0, 4.0]).max()),
        float(np.abs(min_norm_hull([[1.0, 0.0], [0.0, 1.0]]) - [0.5, 0.5]).max()),
    )
    fn = catalog_get("shifted_kink(1.3)")
    p = auto_params(fn, 0.01)
    traj = run(fn, [0.0], StepSchedule.constant(0.01), 50)
    rep = spurious_ledger_variant(fn, [0.0], traj, (1, 50), params=p)
    margin = min(r["decrease"] - r["required"] for r in rep["rows"])
    ok = hull_err <= 1e-12 and rep["all_ok"] and rep["all_inside"] and len(rep["rows"]) == 50
    assert record(10, ok, f"hull error {hull_err:.1e}; v = {rep['v'][0]:.3f}, delta = {rep['delta']:.2f}, "
                          f"50 steps, smallest decrease margin {margin:.1e}")
