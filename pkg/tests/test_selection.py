import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from strata_lab.catalog import catalog_get
from strata_lab.descent import StepSchedule, run
from strata_lab.neighborhoods import MembershipTable, auto_params, membership_table
from strata_lab.selection import (
    NO_ENTRY, NO_EXIT, Selection, build_selection, build_selection_varying, k_left, k_right, switch_sets,
)
from strata_lab.verify import is_good, is_valid

from conftest import golden_cases, load_golden, table_from_columns


def test_there_are_enough_golden_cases():
    assert len(golden_cases()) >= 12


@pytest.mark.parametrize("name", golden_cases())
def test_golden_selection(name):
    tab, expected = load_golden(name)
    assert build_selection(tab).to_json() == expected


def test_k_left_and_k_right():
    tab = table_from_columns(["..IOIO.I", "OOOOOOOO"], [0, 2], 2)
    assert k_left(tab, 0, 1, 8) == 3
    assert k_left(tab, 0, 1, 2) == NO_ENTRY
    assert k_right(tab, 0, 3, 8) == 5
    assert k_right(tab, 0, 1, 8) == NO_EXIT


def test_switch_sets_by_hand():
    left, right = switch_sets([2, 0, 0, 1, 2], [0, 1, 2])
    assert left == {0: [2], 1: [], 2: []}
    assert right == {0: [3], 1: [4], 2: []}


def test_selection_json_round_trip():
    sel = Selection(np.array([1, 0, 0, 1]), np.array([0, 2]))
    rec = json.loads(sel.to_json())
    assert rec["lswitch"] == {"0": [2], "1": []}
    back = Selection.from_dict(rec, [0, 2])
    assert back.to_json() == sel.to_json()
    assert sel.blocks() == [(1, 1, 1), (0, 2, 3), (1, 4, 4)]


_mark = st.sampled_from(".OI")


@st.composite
def random_tables(draw):
    K = draw(st.integers(1, 25))
    dims = draw(st.lists(st.integers(0, 1), min_size=1, max_size=4)) + [2]
    cols = [draw(st.text(alphabet=".OI", min_size=K, max_size=K)) for _ in dims[:-1]]
    cols.append("O" * K)
    return table_from_columns(cols, dims, 2)


@settings(max_examples=300, deadline=None)
@given(random_tables())
def test_selection_always_assigns_and_respects_outer(tab):
    sel = build_selection(tab)
    a = sel.assignments
    assert len(a) == tab.K and (a >= 0).all()
    # each selected lower stratum contains the iterate in its outer neighborhood
    assert tab.outer[np.arange(tab.K), a].all()


@settings(max_examples=300, deadline=None)
@given(random_tables())
def test_blocks_are_inner_at_every_switch(tab):
    """A block next to a block of equal or higher dimension starts (ends) inside the inner neighborhood."""
    sel = build_selection(tab)
    blocks = sel.blocks()
    dims = tab.dims
    for i, (sid, first, last) in enumerate(blocks):
        if i > 0 and dims[blocks[i - 1][0]] >= dims[sid]:
            assert tab.inner[first - 1, sid]
        if i + 1 < len(blocks) and dims[blocks[i + 1][0]] >= dims[sid]:
            assert tab.inner[last - 1, sid]


def test_trajectory_selection_is_valid_and_good(fig1):
    traj = run(fig1, [0.4, 5.5], StepSchedule.constant(0.01), 1500)
    p = auto_params(fig1, 0.01)
    tab = membership_table(fig1.stratification, traj.x[:traj.K], p)
    sel = build_selection(tab)
    assert is_valid(tab, sel)[0]
    assert is_good(tab, sel)[0]


def test_varying_selection_uses_one_parameter_set_per_interval(fig1):
    sched = StepSchedule.inverse_k(0.05)
    traj = run(fig1, [0.4, 5.5], sched, 200)
    sel, used = build_selection_varying(fig1.stratification, traj, sched, auto_params(fig1, 0.05))
    assert [iv for iv, _ in used] == [(1, 1), (2, 3), (4, 7), (8, 15), (16, 31), (32, 63), (64, 127), (128, 200)]
    assert sel.K == 200
    gammas = [p.gamma for _, p in used]
    assert all(b < a for a, b in zip(gammas, gammas[1:]))
