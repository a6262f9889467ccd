"""PV and battery siting/sizing on radial feeders under demand and PV uncertainty."""

from .aro import RobustSolution, build_dsp, build_master, solve_aro
from .arso import build_arso_dsp, build_arso_master, solve_arso
from .baselines import build_tsso, solve_sro, solve_tsso
from .case import CaseData, CaseError, OperatingPoint, load_case, polygon_coefficients, validate_case
from .deterministic import (
    build_deterministic,
    check_feasibility,
    investment_cost,
    operational_cost,
    solve_deterministic,
)
from .milp import LinearModel, SolverParams, fix_variables, solve
from .oracle import autonomy_curve, brute_force_worst_case, perfect_information_benchmark
from .uncertainty import (
    BudgetedSet,
    ExtremePoint,
    Realization,
    ScenarioSet,
    budgeted_set,
    enumerate_extreme_points,
    envelope_from_history,
    realize,
    reduce_scenarios,
)

__version__ = "0.1.0"
