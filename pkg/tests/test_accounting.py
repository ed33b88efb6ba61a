import numpy as np
import pytest

from strata_lab import accounting
from strata_lab.accounting import (
    LEDGER_COLUMNS, analyze, finite_difference_check, kl_monitor, ledger_csv, payments, rate_report,
    stationarity_measure, switch_count_bound, tail_diameter, varying_ledger,
)
from strata_lab.catalog import catalog_get
from strata_lab.descent import StepSchedule, run
from strata_lab.neighborhoods import auto_params
from strata_lab.selection import Selection


def test_payments_by_hand():
    sel = Selection(np.array([1, 0, 0, 1, 1]), np.array([0, 2]))
    cur = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
    prev = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    # left switch of 0 at k=2 pays dist(x_2, Psi_2); right switch at k=3 pays dist(x_4, Psi_3)
    assert payments(sel, cur, prev) == {"P_L": 0.2, "P_R": 4.0, "boundary": 0.0}
    late = Selection(np.array([1, 1, 1, 1, 0]), np.array([0, 2]))
    assert payments(late, cur, prev) == {"P_L": 0.0, "P_R": 0.0, "boundary": 0.5}


def test_switch_count_bound_formula():
    sel = Selection(np.array([1, 0, 1, 0, 1]), np.array([0, 2]))
    p = auto_params(catalog_get("abs_power"), 0.01)
    out = switch_count_bound(sel, p, np.full(5, 0.01))
    assert out[0]["left"] == 2 and out[0]["right"] == 2
    assert out[0]["bound"] == pytest.approx(4 * p.G * 0.05 / 0.01 ** p.alpha)
    assert out[1]["bound"] == pytest.approx(4 * p.G * 0.05 / 0.01 ** (p.alpha + p.beta))


@pytest.fixture(scope="module")
def fig1_run():
    fn = catalog_get("appendix_fig1")
    traj = run(fn, [0.4, 5.5], StepSchedule.constant(0.01), 2000)
    p = auto_params(fn, 0.01)
    return fn, traj, p, analyze(fn, traj, p)


def test_fig1_ledger_aggregates(fig1_run):
    fn, traj, p, res = fig1_run
    s = res["ledger"]["summary"]
    assert res["valid"] and res["good"]
    assert s["valid_descent"]["ok"]
    assert s["payments"]["ok"] and s["payments"]["per_switch_projection_ok"]
    assert s["switch_counts_ok"]
    assert s["lemma"]["violations"] == 0
    assert s["excluded_fraction"] <= 0.01
    assert s["certificate_rate"] == 1.0


def test_ledger_rows_are_consistent(fig1_run):
    fn, traj, p, res = fig1_run
    rows = res["ledger"]["rows"]
    u = rows["usable"]
    assert np.allclose(rows["descent"][u], (rows["g"] - rows["g_next"])[u])
    # g values of consecutive rows on the same stratum chain together
    same = rows["stratum"][1:] == rows["stratum"][:-1]
    assert np.allclose(rows["g_next"][:-1][same], rows["g"][1:][same])
    text = ledger_csv(res["ledger"])
    lines = text.splitlines()
    assert lines[0] == ",".join(LEDGER_COLUMNS)
    assert len(lines) == traj.K + 1


def test_stationarity_measure(fig1_run):
    fn, traj, p, res = fig1_run
    st = stationarity_measure(fn, traj, res["selection"], p)
    assert st["bound_ok"]
    assert st["delta_final"] <= 0.01 ** (p.alpha + 2 * p.beta)


def test_rate_report_rejects_empty_list():
    with pytest.raises(ValueError):
        rate_report(catalog_get("abs_power"), [])


def test_rate_report_fields():
    rep = rate_report(catalog_get("abs_power"), [200, 800], x1=[1.5])
    assert rep["predicted_slope"] == pytest.approx(-2 / 11)
    assert rep["fitted_C"] >= max(r["mean_grad_sq"] for r in rep["rows"])
    assert all(not r["rejected"] for r in rep["rows"])


def test_rate_trend_from_a_start_below_the_bumps():
    """Away from the long initial descent the mean grad-sq decreases with K."""
    rep = rate_report(catalog_get("appendix_fig1"), [2000, 8000, 32000], x1=[0.3, 0.5])
    assert rep["strictly_decreasing"] and rep["slope"] < 0
    assert rep["certificate_rate"] == 1.0


def test_tail_diameter():
    P = np.array([[0.0, 0.0], [3.0, 4.0], [1.0, 1.0]])
    assert tail_diameter(P, chunk=1) == pytest.approx(5.0)


def test_kl_monitor_short_run(fig1):
    sched = StepSchedule.inverse_k(0.01)
    traj = run(fig1, [0.4, 5.5], sched, 5000)
    rep = kl_monitor(fig1, traj, sched, auto_params(fig1, 0.01), tail=500)
    assert rep["nonfinite_terms"] == 0
    assert rep["S2_total"] >= rep["S2_tail_increment"] >= 0
    assert rep["tail_oscillation"] <= sum(traj.gamma[-500:]) * fig1.constants["G"]


def test_varying_ledger(fig1):
    sched = StepSchedule.inverse_k(0.5)
    traj = run(fig1, [0.4, 5.5], sched, 3000)
    rep = varying_ledger(fig1, traj, sched, auto_params(fig1, 0.5))
    assert rep["intervals"][0][:2] == [1, 1]
    assert rep["fitted_C"] >= 0
    assert rep["payments_projection_ok"]
    assert rep["summary"]["lemma"]["violations"] == 0


def test_finite_difference_check_on_a_line(fig1):
    p = auto_params(fig1, 0.01)
    assert finite_difference_check(fig1, 4, [0.5003, 2.3], p) < 1e-6
