"""Stratified subgradient descent: neighborhoods, selections and descent accounting."""

from .catalog import CATALOG, UnknownFunction, catalog_get, catalog_names
from .descent import StepSchedule, Trajectory, doubling_intervals, run
from .geometry import Projector, dist, project_subspace, truncdist
from .hull import min_norm_hull, spurious_ledger_variant
from .neighborhoods import (
    MembershipTable, NeighborhoodParams, ParamsError, auto_params, corollary_gamma, geom_items, membership_table,
    theory_params,
)
from .selection import Selection, build_selection, switch_sets
from .strata import CircleArc, Stratification
from .verify import g_grad, g_value, is_good, is_valid

__version__ = "0.1.0"

__all__ = [
    "CATALOG", "CircleArc", "MembershipTable", "NeighborhoodParams", "ParamsError", "Projector", "Selection",
    "StepSchedule", "Stratification", "Trajectory", "UnknownFunction", "auto_params", "build_selection",
    "catalog_get", "catalog_names", "corollary_gamma", "dist", "doubling_intervals", "g_grad", "g_value",
    "geom_items", "is_good", "is_valid", "membership_table", "min_norm_hull", "project_subspace", "run",
    "spurious_ledger_variant", "switch_sets", "theory_params", "truncdist",
]
