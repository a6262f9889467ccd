"""Two-stage stochastic plan (extensive form) and the static robust bound."""

from __future__ import annotations

import numpy as np

from .case import CaseData, OperatingPoint, _frozen
from .deterministic import (
    PlanSolution,
    add_investment,
    add_operation,
    extract_investment,
    extract_operation,
    investment_cost,
    investment_expr,
    operational_cost,
    require_optimal,
    solve_deterministic,
)
from .milp import LinExpr, LinearModel, SolverParams, solve
from .uncertainty import BudgetedSet, ScenarioSet, case_scenarios, nominal_point

SRO_RULES = ("box", "budgeted")


def scenario_points(case: CaseData, scenarios: ScenarioSet) -> list[OperatingPoint]:
    exp = case.expected_point()
    out = []
    for s in range(scenarios.size):
        ql = exp.ql if scenarios.ql is None else scenarios.ql[s]
        price = exp.price if scenarios.price is None else scenarios.price[s]
        out.append(OperatingPoint(_frozen(scenarios.pv[s]), _frozen(scenarios.pl[s]), _frozen(ql), _frozen(price)))
    return out


def with_nominal_demand(case: CaseData, bset: BudgetedSet) -> ScenarioSet:
    """Case scenarios with every demand profile replaced by the set's nominal demand."""
    ss = case_scenarios(case)
    pl = np.broadcast_to(bset.pl_bar, ss.pl.shape)
    return ScenarioSet(ss.probabilities, ss.pv, _frozen(pl), ss.ql, ss.price, ss.indices)


def build_tsso(case: CaseData, scenarios: ScenarioSet | None = None):
    """Extensive form: shared investments, one operation block (own charging binaries) per scenario."""
    scenarios = case_scenarios(case) if scenarios is None else scenarios
    if scenarios.size < 1:
        raise ValueError("at least one scenario is required")
    m = LinearModel(f"{case.name}-tsso")
    inv = add_investment(m, case)
    blocks = []
    for s, pt in enumerate(scenario_points(case, scenarios)):
        blocks.append(add_operation(m, case, pt, inv, prefix=f"s{s}.", weight=float(scenarios.probabilities[s])))
    ic = investment_expr(case, inv)
    m.set_objective(ic + sum((b.cost for b in blocks), LinExpr()))
    return m, inv, blocks


def solve_tsso(case: CaseData, scenarios: ScenarioSet | None = None,
               params: SolverParams | None = None) -> PlanSolution:
    scenarios = case_scenarios(case) if scenarios is None else scenarios
    m, inv_vars, blocks = build_tsso(case, scenarios)
    res = solve(m, params)
    require_optimal(res, "stochastic model")
    inv = extract_investment(res, inv_vars)
    ops = [extract_operation(res, b) for b in blocks]
    oc = float(sum(p * operational_cost(case, op, b.point)
                   for p, op, b in zip(scenarios.probabilities, ops, blocks)))
    return PlanSolution("tsso", res.status, res.objective, investment_cost(case, inv), oc, inv, ops,
                        extra={"scenario_costs": [operational_cost(case, op, b.point) for op, b in zip(ops, blocks)]})


def sro_point(case: CaseData, bset: BudgetedSet, rule: str = "box") -> OperatingPoint:
    """Single pessimistic realization used by the static robust bound.

    ``box``: every load at ``bar + hat`` and every PV slot at ``bar - hat``
    (each only when its budget is positive).  ``budgeted``: loads raised in the
    ``beta_pl`` slots of largest ``hat * price`` per bus, PV lowered in the
    ``beta_pv`` slots of largest ``pv_bar``.
    """
    if rule not in SRO_RULES:
        raise ValueError(f"rule must be one of {SRO_RULES}")
    base = nominal_point(case, bset)
    pl = np.array(bset.pl_bar, dtype=float)
    pv = np.array(bset.pv_bar, dtype=float)
    if rule == "box":
        if bset.beta_pl > 0:
            pl = pl + bset.pl_hat
        if bset.beta_pv > 0:
            pv = pv - bset.pv_hat
    else:
        score = bset.pl_hat * base.price[:, None]
        for b in range(pl.shape[1]):
            order = np.lexsort((np.arange(len(pv)), -score[:, b]))[: bset.beta_pl]
            pl[order, b] += bset.pl_hat[order, b]
        order = np.lexsort((np.arange(len(pv)), -bset.pv_bar))[: bset.beta_pv]
        pv[order] -= bset.pv_hat[order]
    return base.replace(pv=np.clip(pv, 0.0, 1.0), pl=np.maximum(pl, 0.0))


def solve_sro(case: CaseData, bset: BudgetedSet, rule: str = "box",
              params: SolverParams | None = None) -> PlanSolution:
    """Deterministic plan at the pessimistic realization of :func:`sro_point`."""
    sol = solve_deterministic(case, sro_point(case, bset, rule), params)
    sol.formulation = "sro"
    sol.extra["rule"] = rule
    return sol
