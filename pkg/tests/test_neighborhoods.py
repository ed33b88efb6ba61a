import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from strata_lab.catalog import catalog_get
from strata_lab.neighborhoods import (
    MembershipTable, NeighborhoodParams, ParamsError, auto_exponents, auto_params, corollary_gamma, geom_items,
    geom_sweep, in_inner, in_outer, in_wellposed, inner_threshold, membership_table, outer_threshold,
    skeleton_lower_bound, theory_params, varying_neighborhoods,
)
from strata_lab.descent import StepSchedule

from conftest import SUITE


def quad_params(**kw):
    base = dict(alpha=1 / 12, beta=0.25, gamma=0.01, R=2)
    base.update(kw)
    return NeighborhoodParams(**base)


def test_ray_example_inner_and_outer():
    strat = catalog_get("abs_diff_sq").stratification
    p = quad_params()
    ray = 1  # x > 0, y = 0, rank 1
    assert strat[ray].rank == 1
    # threshold gamma^alpha * min(gamma^beta, dist to origin) = 0.01^(1/12 + 1/4) = 10^(-2/3)
    assert outer_threshold(strat, ray, [1.0, 0.2], p) == pytest.approx(10 ** (-2 / 3), rel=1e-12)
    assert inner_threshold(strat, ray, [1.0, 0.2], p) == pytest.approx(0.1, rel=1e-12)
    assert in_inner(strat, ray, [1.0, 1e-4], p)
    assert not in_inner(strat, ray, [1.0, 0.2], p)
    assert in_outer(strat, ray, [1.0, 0.2], p)
    assert not in_outer(strat, ray, [1.0, 0.22], p)


def test_scale_caps_at_lower_skeleton_distance():
    strat = catalog_get("abs_diff_sq").stratification
    p = quad_params()
    # near the origin the cap is the distance to the origin, 0.05
    x = [0.05, 0.0]
    assert inner_threshold(strat, 1, x, p) == pytest.approx(0.01 ** 0.25 * 0.05)
    assert outer_threshold(strat, 1, x, p) == pytest.approx(0.01 ** (1 / 12) * 0.05)


def test_wellposed_region():
    strat = catalog_get("abs_diff_sq").stratification
    p = quad_params()
    assert in_wellposed(strat, 1, [1.0, 0.2], p)
    assert not in_wellposed(strat, 1, [0.3, 0.2], p)  # 0.2 > A3 * 0.36
    # the origin has an empty lower skeleton: radius A3 * 1
    assert in_wellposed(strat, 0, [0.2, 0.1], p)
    assert not in_wellposed(strat, 0, [0.2, 0.2], p)


def test_structural_checks():
    with pytest.raises(ParamsError):
        quad_params(alpha=0.3)
    with pytest.raises(ParamsError):
        quad_params(beta=0.4)  # (R+1) beta >= 1
    with pytest.raises(ParamsError):
        quad_params(gamma=1.0)
    with pytest.raises(ParamsError):
        quad_params(A3=0.3)
    with pytest.raises(ParamsError):
        quad_params(lambda_lo=2.0, lambda_hi=1.0)


def test_strict_mode_enforces_step_hypotheses(fig1):
    loose = auto_params(fig1, 0.01)
    assert not all(loose.hypotheses().values())
    with pytest.raises(ParamsError):
        auto_params(fig1, 0.01, strict=True)


@pytest.mark.parametrize("name", SUITE)
def test_theory_params_meet_every_hypothesis(name):
    p = theory_params(catalog_get(name))
    assert all(p.hypotheses().values())
    assert all(p.geom_hypotheses().values())
    assert p.gamma < p.gamma0 < 1


def test_auto_exponents_and_corollary_rule():
    a, b = auto_exponents(2)
    assert b == pytest.approx(0.25) and a == pytest.approx(1 / 12)
    assert corollary_gamma(2000, 2) == pytest.approx(2000 ** (-1 + 2 / 14))
    assert corollary_gamma(2000, 1) == pytest.approx(2000 ** (-1 + 2 / 11))


def test_derived_constants():
    p = quad_params(lambda_lo=0.5, lambda_hi=2.0, L2=3.0)
    assert p.A1 == pytest.approx(0.5 / (16 * 4))
    assert p.A2 == pytest.approx(9 * (4 * 4 / 0.5 + 0.25))


def test_params_json_round_trip(fig1):
    p = auto_params(fig1, 0.01)
    text = p.to_json()
    assert NeighborhoodParams.from_json(text) == p
    rec = json.loads(text)
    rec["A1"] *= 1.01
    with pytest.raises(ParamsError):
        NeighborhoodParams.from_dict(rec)


def test_membership_table_rejects_inner_without_outer():
    with pytest.raises(ValueError):
        MembershipTable([[True]], [[False]], [0], 1)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(SUITE), st.floats(1e-6, 0.5), st.integers(0, 2 ** 31 - 1))
def test_inner_is_inside_outer(name, gamma, seed):
    fn = catalog_get(name)
    strat = fn.stratification
    p = auto_params(fn, gamma)
    X = np.random.default_rng(seed).uniform(strat.lo, strat.hi, size=(200, strat.d))
    tab = membership_table(strat, X, p)  # raises if some inner point is not outer
    # every point is in the closure-neighborhood of at least one stratum
    assert tab.outer.any(axis=1).all()


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.5), st.floats(-0.5, 0.5))
def test_geom_items_hold_pointwise(dx, dy):
    fn = catalog_get("abs_diff_sq")
    p = theory_params(fn)
    x = np.array([1.0 + dx, dy * p.gamma ** 0.3])
    x2 = x + np.array([0.0, p.G * p.gamma])
    for item in geom_items(fn.stratification, x, x2, 1, p):
        assert item.holds, item


@pytest.mark.parametrize("name", SUITE)
def test_geom_sweep_has_no_counterexamples(name):
    counts = geom_sweep(catalog_get(name), theory_params(catalog_get(name)), n=3000, seed=7)
    for item, c in counts.items():
        assert c["failures"] == 0, (item, c)
        assert c["hypothesis"] > 0, (item, c)


def test_skeleton_lower_bound(fig1):
    p = theory_params(fig1)
    lhs, rhs = skeleton_lower_bound(fig1.stratification, [0.3, 2.0], 9, p)
    assert lhs >= rhs
    with pytest.raises(ParamsError):
        skeleton_lower_bound(fig1.stratification, [0.3, 2.0], 9, auto_params(fig1, 0.01))


def test_varying_neighborhoods_freeze_per_interval(fig1):
    sched = StepSchedule.inverse_k(0.5)
    base = auto_params(fig1, 0.5)
    (a, b), p = varying_neighborhoods(2, sched, 8, base)
    assert (a, b) == (2, 3)
    assert p.gamma == pytest.approx(sched(4))
    (a, b), p = varying_neighborhoods(4, sched, 8, base)
    # the schedule continues past the horizon, so the next step is used
    assert (a, b) == (8, 8) and p.gamma == pytest.approx(sched(9))
    with pytest.raises(IndexError):
        varying_neighborhoods(5, sched, 8, base)
