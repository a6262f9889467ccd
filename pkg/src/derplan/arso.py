"""Adaptive robust-stochastic planning: budgeted demand, PV as discrete scenarios.

The adversary picks one demand pattern shared by all PV scenarios; operation
adapts per scenario and the objective takes the probability-weighted
operation cost.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from .aro import (
    CONVERGED,
    MAX_ITER,
    STALLED,
    DualSubproblem,
    RobustSolution,
    _gap_closed,
    build_subproblem,
    linearized_dual,
    solve_dsp,
    w_values,
)
from .case import CaseData
from .deterministic import (
    InvestmentValues,
    SolveError,
    add_investment,
    add_operation,
    add_shared_w,
    extract_investment,
    extract_operation,
    investment_cost,
    investment_expr,
)
from .milp import GE, INF, LinExpr, LinearModel, ModelError, SolverParams, solve
from .oracle import arso_points
from .uncertainty import BudgetedSet, Realization

log = logging.getLogger(__name__)

CUT_STYLES = ("aggregated", "multi")


@dataclass
class ArsoMaster:
    model: LinearModel
    inv: object
    w: list  # per scenario
    eta: list
    blocks: list  # [r][s]
    invest_cost: LinExpr


def build_arso_master(case: CaseData, bset: BudgetedSet, recorded_pl: list, cut_style: str = "aggregated") -> ArsoMaster:
    """Investments, per-scenario charging indicators and one block per (recorded demand, scenario).

    ``aggregated`` bounds a single ``eta`` by the expected cost of each recorded
    demand; ``multi`` bounds one ``eta_s`` per scenario by its weighted cost.
    """
    if cut_style not in CUT_STYLES:
        raise ValueError(f"cut_style must be one of {CUT_STYLES}")
    if not recorded_pl:
        raise ModelError("the master problem needs at least one recorded realization")
    S, T = case.n_scen, bset.horizon
    rho = case.probabilities
    m = LinearModel(f"{case.name}-arso-mp")
    inv = add_investment(m, case)
    ws = [add_shared_w(m, case, inv, T, prefix=f"s{s}.") for s in range(S)]
    if cut_style == "aggregated":
        eta = [m.add_var("eta", -INF)]
    else:
        eta = [m.add_var(f"eta[{s}]", -INF) for s in range(S)]
    blocks = []
    for r, pl in enumerate(recorded_pl):
        row = []
        for s, pt in enumerate(arso_points(case, bset, pl)):
            row.append(add_operation(m, case, pt, inv, w=ws[s], prefix=f"r{r}s{s}.", weight=float(rho[s])))
        if cut_style == "aggregated":
            m.add_constr(eta[0] - sum((b.cost for b in row), LinExpr()), GE, 0.0, f"cut[{r}]")
        else:
            for s, b in enumerate(row):
                m.add_constr(eta[s] - b.cost, GE, 0.0, f"cut[{r},{s}]")
        blocks.append(row)
    ic = investment_expr(case, inv)
    m.set_objective(ic + sum(eta, LinExpr()))
    return ArsoMaster(m, inv, ws, eta, blocks, ic)


def build_arso_dsp(case: CaseData, bset: BudgetedSet, inv: InvestmentValues, w_hats,
                   big_m: float | None = None) -> DualSubproblem:
    """Joint dual subproblem over all scenarios with one shared demand pattern."""
    dset = bset.demand_only()
    m = LinearModel(f"{case.name}-arso-sub")
    blocks = []
    for s, pt in enumerate(arso_points(case, dset)):
        sub = build_subproblem(case, pt, inv, w_hats[s], weight=float(case.probabilities[s]), model=m,
                               prefix=f"s{s}.")
        blocks.append(sub.block)
    return linearized_dual(m, blocks, dset, use_pv=False, big_m=big_m)


def solve_arso(case: CaseData, bset: BudgetedSet, tol: float = 1e-6, max_iter: int = 200,
               params: SolverParams | None = None, big_m: float | None = None,
               cut_style: str = "aggregated") -> RobustSolution:
    """Robust-stochastic plan: demand from ``bset`` (its PV part is ignored), PV from the case scenarios."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    dset = bset.demand_only()
    S, T, B = case.n_scen, dset.horizon, dset.pl_bar.shape[1]
    recorded = [Realization(dset.pv_bar, dset.pl_bar)]
    seen = {recorded[0].digest()}
    lb, ub = -math.inf, math.inf
    best = None
    trace, warnings = [], []
    status = MAX_ITER
    for it in range(1, max_iter + 1):
        t0 = time.perf_counter()
        mp = build_arso_master(case, dset, [r.pl for r in recorded], cut_style)
        mres = solve(mp.model, params)
        if not mres.ok:
            raise SolveError(f"master problem: solver returned {mres.status}", mres.status)
        mp_time = time.perf_counter() - t0
        lb = max(lb, mres.objective)
        inv = extract_investment(mres, mp.inv)
        w = np.stack([w_values(mres, ws, (T, B)) for ws in mp.w])

        t0 = time.perf_counter()
        dsp = build_arso_dsp(case, dset, inv, w, big_m)
        dres = solve_dsp(dsp, dset, params)
        dsp_time = time.perf_counter() - t0
        if dres.bigm_active:
            warnings.append(f"iteration {it}: Big-M bound active")
        ic = investment_cost(case, inv)
        theta = dres.block_values
        cand = ic + float(sum(theta))
        if cand < ub:
            ub = cand
            best = (inv, w, dres, ic)
        trace.append({"iter": it, "lb": lb, "ub": ub, "mp_time_s": mp_time, "dsp_time_s": dsp_time,
                      "u_star_digest": dres.extreme_point.digest(), "bigm_residual": dres.bigm_residual,
                      "theta_s": [float(v) for v in theta]})
        log.info("arso iter %d lb=%.6f ub=%.6f", it, lb, ub)
        last = (mres, mp)
        if _gap_closed(lb, ub, tol):
            status = CONVERGED
            break
        dig = dres.realization.digest()
        if dig in seen:
            status = STALLED
            break
        seen.add(dig)
        recorded.append(dres.realization)

    mres, mp = last
    inv, w, dres, ic = best
    return RobustSolution(
        formulation="arso", status=status, objective=ub, lb=lb, ub=ub, investments=inv, w=w,
        investment_cost=ic, operational_cost=float(sum(dres.block_values)), worst_case=dres.realization,
        worst_pattern=dres.extreme_point, iterations=len(trace), trace=trace, recorded=list(recorded),
        block_operations=[[extract_operation(mres, b) for b in row] for row in mp.blocks],
        block_points=[[b.point for b in row] for row in mp.blocks],
        scenario_values=[float(v) for v in dres.block_values], warnings=warnings,
        mp_investments=extract_investment(mres, mp.inv),
    )
