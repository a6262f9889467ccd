"""Independent checks: brute-force worst cases, full-enumeration robust plans,
the perfect-information benchmark and the autonomy curve."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .case import CaseData, OperatingPoint, _frozen
from .deterministic import (
    InvestmentValues,
    PlanSolution,
    add_investment,
    add_operation,
    add_shared_w,
    build_deterministic,
    extract_investment,
    extract_operation,
    fixed_investment,
    investment_cost,
    investment_expr,
    operational_cost,
    require_optimal,
)
from .milp import GE, INF, LE, HighsSession, LinExpr, LinearModel, SolverParams, quicksum, solve
from .uncertainty import (
    DEFAULT_ENUM_LIMIT,
    BudgetedSet,
    ExtremePoint,
    Realization,
    apply_realization,
    enumerate_extreme_points,
    nominal_point,
    realize,
)

_TIE = 1e-9


class _PatternEvaluator:
    """Operation LP for a fixed plan, re-solved for many realizations."""

    def __init__(self, case: CaseData, point: OperatingPoint, inv: InvestmentValues, w_hat,
                 params: SolverParams | None = None):
        from .aro import build_subproblem

        self.params = params or SolverParams()
        self.case, self.point, self.inv, self.w = case, point, inv, w_hat
        self.sub = build_subproblem(case, point, inv, w_hat)
        blk = self.sub.block
        self.pl_mask = blk.pl_rows >= 0
        self.pv_mask = blk.pv_rows >= 0
        self.session = HighsSession(self.sub.model, self.params) if self.params.resolved_backend() == "highs" else None

    def value(self, pv: np.ndarray, pl: np.ndarray) -> float:
        blk = self.sub.block
        pl_rhs = -np.asarray(pl)[self.pl_mask]
        pv_rhs = (np.asarray(pv)[:, None] * blk.pv_gain[None, :])[self.pv_mask]
        rows = np.concatenate([blk.pl_rows[self.pl_mask], blk.pv_rows[self.pv_mask]])
        vals = np.concatenate([pl_rhs, pv_rhs])
        if self.session is not None:
            self.session.set_rhs(rows, vals)
            res = self.session.solve()
        else:
            m = self.sub.model.copy()
            for r, v in zip(rows, vals):
                m.row_rhs[int(r)] = float(v)
            res = solve(m, self.params)
        return res.objective if res.ok else np.inf


def _better(val: float, key: tuple, best) -> bool:
    if best is None:
        return True
    bval, bkey = best[0], best[1]
    scale = _TIE * (1.0 + abs(bval))
    if val > bval + scale:
        return True
    return abs(val - bval) <= scale and key < bkey


def brute_force_worst_case(case: CaseData, bset: BudgetedSet, inv: InvestmentValues, w_hat,
                           limit: int = DEFAULT_ENUM_LIMIT, params: SolverParams | None = None):
    """Worst realization of ``bset`` for a fixed plan by enumerating every extreme point.

    Returns ``(realization, value, pattern)``; ties go to the lexicographically smallest pattern.
    """
    ev = _PatternEvaluator(case, nominal_point(case, bset), inv, w_hat, params)
    best = None
    for ep in enumerate_extreme_points(bset, limit):
        real = realize(bset, ep)
        val = ev.value(real.pv, real.pl)
        key = ep.key()
        if _better(val, key, best):
            best = (val, key, real, ep)
    return best[2], best[0], best[3]


def arso_points(case: CaseData, bset: BudgetedSet, pl: np.ndarray | None = None) -> list[OperatingPoint]:
    """Per-scenario operating points with the demand replaced by ``pl`` (nominal by default)."""
    pl = bset.pl_bar if pl is None else pl
    return [case.scenario_point(s).replace(pl=pl) for s in range(case.n_scen)]


def brute_force_worst_case_arso(case: CaseData, bset: BudgetedSet, inv: InvestmentValues, w_hats,
                                limit: int = DEFAULT_ENUM_LIMIT, params: SolverParams | None = None):
    """Worst demand pattern for the expected operation cost over the PV scenarios."""
    rho = case.probabilities
    evs = [_PatternEvaluator(case, pt, inv, w_hats[s], params) for s, pt in enumerate(arso_points(case, bset))]
    best = None
    for ep in enumerate_extreme_points(bset, limit, pv=False):
        real = realize(bset, ep)
        vals = [ev.value(ev.point.pv, real.pl) for ev in evs]
        val = float(sum(r * v for r, v in zip(rho, vals)))
        key = ep.key()
        if _better(val, key, best):
            best = (val, key, real, ep, vals)
    return best[2], best[0], best[3]


# ---------------------------------------------------------------------------
# full-enumeration robust plans


@dataclass
class EnumeratedPlan:
    objective: float
    investments: InvestmentValues
    n_points: int


def solve_aro_enumerated(case: CaseData, bset: BudgetedSet, limit: int = 5000,
                         params: SolverParams | None = None) -> EnumeratedPlan:
    """Robust plan with every extreme point as an operation block (small instances only)."""
    from .aro import build_master

    base = nominal_point(case, bset)
    points = [apply_realization(base, realize(bset, ep)) for ep in enumerate_extreme_points(bset, limit)]
    mp = build_master(case, points)
    res = solve(mp.model, params)
    require_optimal(res, "enumerated robust plan")
    return EnumeratedPlan(res.objective, extract_investment(res, mp.inv), len(points))


def solve_arso_enumerated(case: CaseData, bset: BudgetedSet, limit: int = 5000,
                          params: SolverParams | None = None) -> EnumeratedPlan:
    from .arso import build_arso_master

    pls = [realize(bset, ep).pl for ep in enumerate_extreme_points(bset, limit, pv=False)]
    mp = build_arso_master(case, bset, pls)
    res = solve(mp.model, params)
    require_optimal(res, "enumerated robust-stochastic plan")
    return EnumeratedPlan(res.objective, extract_investment(res, mp.inv), len(pls))


# ---------------------------------------------------------------------------
# perfect information and autonomy


def concatenated_point(case: CaseData) -> OperatingPoint:
    """All scenarios laid end to end in scenario order."""
    S = case.n_scen
    return OperatingPoint(
        _frozen(np.concatenate([case.pv_profile.pv[s] for s in range(S)])),
        _frozen(np.concatenate([case.loads.pl[s] for s in range(S)])),
        _frozen(np.concatenate([case.loads.ql[s] for s in range(S)])),
        _frozen(np.concatenate([case.costs.price[s] for s in range(S)])),
    )


def _segment_weights(case: CaseData, weighted: bool) -> np.ndarray:
    """Per-slot cost weights of the concatenated horizon."""
    T = case.horizon
    if not weighted:
        return np.ones(T * case.n_scen)
    return np.repeat(case.probabilities, T)


def _weighted_point(point: OperatingPoint, weights: np.ndarray) -> OperatingPoint:
    return point.replace(price=point.price * weights)


@dataclass
class ConcatenatedRun:
    status: str
    objective: float
    investment_cost: float
    operational_cost: float
    investments: InvestmentValues
    grid_energy: float
    load_energy: float

    @property
    def autonomy(self) -> float:
        return 1.0 - self.grid_energy / self.load_energy if self.load_energy > 0 else 1.0


def _solve_concatenated(case: CaseData, inv: InvestmentValues | None, weighted: bool, autonomy: float | None,
                        params: SolverParams | None) -> ConcatenatedRun:
    point = concatenated_point(case)
    weights = _segment_weights(case, weighted)
    m = LinearModel(f"{case.name}-concat")
    if inv is None:
        iv = add_investment(m, case)
    else:
        iv = fixed_investment(inv)
    blk = add_operation(m, case, point, iv)
    # operating costs are weighted per segment; rebuild the cost with the weights
    cost = LinExpr()
    for t in range(point.horizon):
        for k in range(case.network.n_bus):
            if blk.pg[t, k] >= 0:
                cost.add_term(int(blk.pg[t, k]), weights[t] * point.price[t])
            if blk.pv[t, k] >= 0:
                cost.add_term(int(blk.pv[t, k]), weights[t] * case.costs.oc_pv)
            if blk.ds[t, k] >= 0:
                cost.add_term(int(blk.ds[t, k]), weights[t] * case.costs.oc_bt)
    total_load = float(point.pl.sum())
    if autonomy is not None:
        grid = LinExpr({int(i): 1.0 for i in blk.pg.ravel() if i >= 0})
        m.add_constr(grid, LE, (1.0 - autonomy) * total_load, "autonomy")
    ic = investment_expr(case, iv)
    m.set_objective(ic + cost)
    res = solve(m, params)
    if not res.ok:
        empty = InvestmentValues.zeros(case.network.n_bus)
        return ConcatenatedRun(res.status, np.nan, np.nan, np.nan, empty if inv is None else inv, np.nan, total_load)
    plan = extract_investment(res, iv) if inv is None else inv
    op = extract_operation(res, blk)
    oc = float((weights * point.price) @ op.pg.sum(axis=1) + case.costs.oc_pv * (weights @ op.pv.sum(axis=1))
               + case.costs.oc_bt * (weights @ op.ds.sum(axis=1)))
    icv = investment_cost(case, plan)
    return ConcatenatedRun(res.status, icv + oc, icv, oc, plan, float(op.pg.sum()), total_load)


def perfect_information_benchmark(case: CaseData, weighted: bool = True,
                                  params: SolverParams | None = None) -> ConcatenatedRun:
    """Plan chosen with every scenario known in advance, operated as one chained horizon.

    With ``weighted`` the operating cost of scenario ``s`` is scaled by its probability.
    """
    return _solve_concatenated(case, None, weighted, None, params)


def evaluate_plan(case: CaseData, inv: InvestmentValues, weighted: bool = True,
                  params: SolverParams | None = None) -> ConcatenatedRun:
    """Realized cost of a fixed plan on the concatenated horizon (operation re-optimised)."""
    return _solve_concatenated(case, inv, weighted, None, params)


@dataclass
class AutonomyPoint:
    level: float
    feasible: bool
    investment_cost: float
    objective: float
    pv_kw: float
    bess_kwh: float


def autonomy_curve(case: CaseData, levels, weighted: bool = True,
                   params: SolverParams | None = None) -> list[AutonomyPoint]:
    """Cheapest plan reaching each autonomy level on the concatenated horizon."""
    out = []
    for lv in levels:
        lv = float(lv)
        if not 0.0 <= lv <= 1.0:
            raise ValueError(f"autonomy level {lv} outside [0, 1]")
        run = _solve_concatenated(case, None, weighted, lv, params)
        ok = run.status == "optimal"
        out.append(AutonomyPoint(lv, ok, run.investment_cost if ok else np.nan, run.objective if ok else np.nan,
                                 float(run.investments.gamma_pv.sum()) if ok else np.nan,
                                 float(run.investments.gamma_bt.sum()) if ok else np.nan))
    return out


def parse_levels(spec: str) -> list[float]:
    """``"0:1:0.25"`` (start:stop:step, inclusive) or ``"0,0.5,1"``."""
    if ":" in spec:
        a, b, h = (float(v) for v in spec.split(":"))
        if h <= 0:
            raise ValueError("step must be positive")
        n = int(np.floor((b - a) / h + 1e-9)) + 1
        return [round(a + k * h, 10) for k in range(n)]
    return [float(v) for v in spec.split(",") if v.strip()]
