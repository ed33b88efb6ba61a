import json
from pathlib import Path

import numpy as np
import pytest

from strata_lab.catalog import catalog_get
from strata_lab.neighborhoods import MembershipTable

GOLDEN = Path(__file__).parent / "golden"

# the five functions used for the randomized suites
SUITE = ["appendix_fig1", "abs_diff_sq", "abs_power", "two_lines_demo", "ring"]


def table_from_columns(columns, dims, d, dist=None):
    """Membership table from per-stratum strings: 'I' inner, 'O' outer only, '.' neither."""
    inner = np.array([[c == "I" for c in col] for col in columns]).T
    outer = np.array([[c in "IO" for c in col] for col in columns]).T
    return MembershipTable(inner, outer, np.array(dims), d, None if dist is None else np.array(dist))


def golden_cases():
    return sorted(p.name[: -len(".table.json")] for p in GOLDEN.glob("*.table.json"))


def load_golden(name):
    case = json.loads((GOLDEN / f"{name}.table.json").read_text())
    tab = table_from_columns(case["columns"], case["dims"], case["d"], case.get("dist"))
    expected = (GOLDEN / f"{name}.selection.json").read_text()
    return tab, expected


@pytest.fixture(scope="session")
def fig1():
    return catalog_get("appendix_fig1")


@pytest.fixture(scope="session")
def ring():
    return catalog_get("ring")


# one status line per acceptance criterion, shown at the end of the run
ACCEPTANCE = {}


def record(criterion, ok, detail):
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
