"""Adaptive robust planning by Benders decomposition.

The master problem (MP) holds the investments, the charging indicators ``w``
and one primal operation block per recorded worst-case realization.  The dual
subproblem (DSP) is the LP dual of the fixed-investment operation problem,
extended with extreme-point binaries that select the realization and Big-M
rows that linearise the products of duals and binaries.
"""

from __future__ import annotations

import json
import logging
import math
import time
from pathlib import Path
from dataclasses import dataclass, field

import numpy as np

from .case import CaseData, OperatingPoint
from .deterministic import (
    InvestmentValues,
    OperationBlock,
    OperationValues,
    SolveError,
    add_investment,
    add_operation,
    add_shared_w,
    extract_investment,
    extract_operation,
    fixed_investment,
    investment_cost,
    investment_expr,
    require_optimal,
)
from .milp import EQ, GE, INF, LE, LinExpr, LinearModel, ModelError, SolverParams, Var, dualize, solve
from .uncertainty import BudgetedSet, ExtremePoint, Realization, apply_realization, nominal_point, realize

log = logging.getLogger(__name__)

CONVERGED, MAX_ITER, STALLED = "converged", "max_iter", "stalled"


# ---------------------------------------------------------------------------
# primal subproblem


@dataclass
class Subproblem:
    model: LinearModel
    block: OperationBlock


def build_subproblem(case: CaseData, point: OperatingPoint, inv: InvestmentValues, w_hat,
                     weight: float = 1.0, model: LinearModel | None = None, prefix: str = "") -> Subproblem:
    """Operation LP with investments and charging indicators fixed (minimisation)."""
    if model is None:
        model = LinearModel(f"{case.name}-sub")
    _check_plan(case, inv, w_hat)
    w = np.asarray(w_hat, dtype=float)
    block = add_operation(model, case, point, fixed_investment(inv), w=w, prefix=prefix, weight=weight)
    model.set_objective(model.objective + block.cost)
    return Subproblem(model, block)


def _check_plan(case: CaseData, inv: InvestmentValues, w_hat) -> None:
    tech = case.tech
    w = np.asarray(w_hat, dtype=float)
    if w.ndim != 2 or w.shape[1] != case.network.n_bus:
        raise ModelError("w_hat must be a (slots x buses) array")
    bad = (
        (inv.gamma_pv < tech.cap_min * inv.nu_pv - 1e-6).any()
        or (inv.gamma_pv > tech.cap_max * inv.nu_pv + 1e-6).any()
        or (inv.gamma_bt < tech.cap_min * inv.nu_bt - 1e-6).any()
        or (inv.gamma_bt > tech.cap_max * inv.nu_bt + 1e-6).any()
        or inv.nu_pv.sum() > tech.n_pv_max + 1e-9
        or inv.nu_bt.sum() > tech.n_bt_max + 1e-9
        or (w > inv.nu_bt[None, :] + 1e-9).any()
        or ((w != 0) & (w != 1)).any()
    )
    if bad:
        raise ModelError("investment plan / charging indicators violate the installation constraints")


# ---------------------------------------------------------------------------
# dual subproblem


@dataclass
class BigMLink:
    dual: Var
    binary: Var
    aux: Var


@dataclass
class DualSubproblem:
    model: LinearModel
    primal: LinearModel
    duals: list
    big_m: float
    u_plus: np.ndarray  # (T,) column or -1
    u_minus: np.ndarray
    v_plus: np.ndarray  # (T, B) column or -1
    v_minus: np.ndarray
    links: list = field(default_factory=list)
    # per-block objective contributions (constant rhs part and deviation part)
    block_parts: list = field(default_factory=list)

    def extreme_point(self, x: np.ndarray) -> ExtremePoint:
        def take(ix):
            return np.where(ix >= 0, np.round(x[np.maximum(ix, 0)]), 0).astype(int)

        return ExtremePoint(take(self.u_plus), take(self.u_minus), take(self.v_plus), take(self.v_minus))

    def block_values(self, x: np.ndarray) -> list[float]:
        return [float(expr.value(x)) for expr in self.block_parts]

    def bigm_residual(self, x: np.ndarray) -> float:
        """Largest ``|aux - dual * binary|`` over all linearised products."""
        worst = 0.0
        for ln in self.links:
            worst = max(worst, abs(x[ln.aux.index] - x[ln.dual.index] * x[ln.binary.index]))
        return worst

    def bigm_active(self, x: np.ndarray, tol: float = 1e-6) -> bool:
        return any(abs(x[ln.dual.index]) >= self.big_m * (1 - tol) for ln in self.links)


def default_big_m(bset: BudgetedSet) -> float:
    return float(max(np.max(bset.pl_bar + bset.pl_hat, initial=0.0), np.max(bset.pv_bar + bset.pv_hat, initial=0.0)))


def _link(dsp: LinearModel, pi: Var, z: Var, M: float, name: str) -> Var:
    """Auxiliary ``y = pi * z`` for binary ``z`` and ``|pi| <= M``."""
    y = dsp.add_var(f"{name}", -INF)
    dsp.add_constr(y - M * z, LE, 0.0, f"{name}.ub")
    dsp.add_constr(y + M * z, GE, 0.0, f"{name}.lb")
    dsp.add_constr(pi - y + M * z, LE, M, f"{name}.cub")
    dsp.add_constr(pi - y - M * z, GE, -M, f"{name}.clb")
    return y


def linearized_dual(primal: LinearModel, blocks: list[OperationBlock], bset: BudgetedSet,
                    use_pv: bool = True, big_m: float | None = None) -> DualSubproblem:
    """Dualise ``primal`` and add the adversary's extreme-point choice over ``bset``.

    ``blocks`` are the operation blocks of ``primal``; demand binaries are shared
    by all blocks, PV binaries too (when ``use_pv``).
    """
    dsp, duals = dualize(primal, name=primal.name + "-dsp")
    M = default_big_m(bset) if big_m is None else float(big_m)
    T, B = bset.pl_bar.shape
    up, um = np.full(T, -1), np.full(T, -1)
    vp, vm = np.full((T, B), -1), np.full((T, B), -1)

    pv_slots = []
    if use_pv and bset.beta_pv > 0:
        gain_any = any((blk.pv_gain > 0).any() for blk in blocks)
        pv_slots = [t for t in range(T) if bset.pv_hat[t] > 0 and gain_any]
    for t in pv_slots:
        up[t] = dsp.add_var(f"U+[{t}]", binary=True).index
        um[t] = dsp.add_var(f"U-[{t}]", binary=True).index
        dsp.add_constr(LinExpr({up[t]: 1.0, um[t]: 1.0}), LE, 1.0, f"Uexcl[{t}]")
    if pv_slots:
        dsp.add_constr(LinExpr({int(i): 1.0 for t in pv_slots for i in (up[t], um[t])}), LE, bset.beta_pv, "Ubudget")

    if bset.beta_pl > 0:
        for b in range(B):
            cols = []
            for t in range(T):
                if bset.pl_hat[t, b] > 0:
                    vp[t, b] = dsp.add_var(f"V+[{t},{b}]", binary=True).index
                    vm[t, b] = dsp.add_var(f"V-[{t},{b}]", binary=True).index
                    dsp.add_constr(LinExpr({vp[t, b]: 1.0, vm[t, b]: 1.0}), LE, 1.0, f"Vexcl[{t},{b}]")
                    cols += [vp[t, b], vm[t, b]]
            if cols:
                dsp.add_constr(LinExpr({int(i): 1.0 for i in cols}), LE, bset.beta_pl, f"Vbudget[{b}]")

    out = DualSubproblem(dsp, primal, duals, M, up, um, vp, vm)
    obj = dsp.objective.copy()
    for blk in blocks:
        dev = LinExpr()
        for t in range(T):
            for b in range(B):
                r = blk.pl_rows[t, b]
                if vp[t, b] >= 0:
                    # rhs = -(bar + hat * (V+ - V-))
                    for col, sgn, tag in ((vp[t, b], -1.0, "+"), (vm[t, b], 1.0, "-")):
                        z = Var(int(col), "")
                        y = _link(dsp, duals[r], z, M, f"{blk.prefix}a{tag}[{t},{b}]")
                        out.links.append(BigMLink(duals[r], z, y))
                        dev.add_term(y.index, sgn * bset.pl_hat[t, b])
                r = blk.pv_rows[t, b]
                if r >= 0 and up[t] >= 0 and blk.pv_gain[b] > 0:
                    # rhs = gamma * (bar + hat * (U+ - U-))
                    for col, sgn, tag in ((up[t], 1.0, "+"), (um[t], -1.0, "-")):
                        z = Var(int(col), "")
                        y = _link(dsp, duals[r], z, M, f"{blk.prefix}i{tag}[{t},{b}]")
                        out.links.append(BigMLink(duals[r], z, y))
                        dev.add_term(y.index, sgn * bset.pv_hat[t] * blk.pv_gain[b])
        rows = _block_rows(primal, blk)
        out.block_parts.append(_rhs_part(primal, rows, duals) + dev)
        obj.iadd(dev)
    dsp.set_objective(obj, "max")
    return out


def _block_rows(primal: LinearModel, blk: OperationBlock) -> list[int]:
    return [r for r, name in enumerate(primal.row_names) if name.startswith(blk.prefix)] if blk.prefix else \
        list(range(primal.num_rows))


def _rhs_part(primal: LinearModel, rows, duals) -> LinExpr:
    return LinExpr({duals[r].index: primal.row_rhs[r] for r in rows if primal.row_rhs[r] != 0.0})


def build_dsp(case: CaseData, bset: BudgetedSet, inv: InvestmentValues, w_hat,
              big_m: float | None = None) -> DualSubproblem:
    """Worst-case dual subproblem for a fixed plan (maximisation MILP)."""
    sub = build_subproblem(case, nominal_point(case, bset), inv, w_hat)
    return linearized_dual(sub.model, [sub.block], bset, use_pv=True, big_m=big_m)


@dataclass
class DspResult:
    value: float
    extreme_point: ExtremePoint
    realization: Realization
    block_values: list
    bigm_residual: float
    bigm_active: bool
    solve_time: float


def solve_dsp(dsp: DualSubproblem, bset: BudgetedSet, params: SolverParams | None = None,
              pv: bool = True) -> DspResult:
    res = solve(dsp.model, params)
    if not res.ok:
        raise SolveError(f"dual subproblem: solver returned {res.status}", res.status)
    x = res.primal
    ep = dsp.extreme_point(x)
    real = realize(bset, ep)
    active = dsp.bigm_active(x)
    if active:
        log.warning("dual values reached the Big-M bound %.4g; the worst case may be underestimated", dsp.big_m)
    return DspResult(res.objective, ep, real, dsp.block_values(x), dsp.bigm_residual(x), active, res.solve_time)


# ---------------------------------------------------------------------------
# master problem


@dataclass
class Master:
    model: LinearModel
    inv: object
    w: list
    eta: list  # one entry (aggregated) or one per scenario
    blocks: list  # blocks[r][s]
    invest_cost: LinExpr


def build_master(case: CaseData, recorded: list[OperatingPoint]) -> Master:
    """Investments, shared charging indicators and one operation block per recorded point."""
    if not recorded:
        raise ModelError("the master problem needs at least one recorded realization")
    m = LinearModel(f"{case.name}-mp")
    inv = add_investment(m, case)
    w = add_shared_w(m, case, inv, recorded[0].horizon)
    eta = m.add_var("eta", -INF)
    blocks = []
    for r, point in enumerate(recorded):
        blk = add_operation(m, case, point, inv, w=w, prefix=f"r{r}.")
        m.add_constr(eta - blk.cost, GE, 0.0, f"cut[{r}]")
        blocks.append([blk])
    ic = investment_expr(case, inv)
    m.set_objective(ic + eta)
    return Master(m, inv, w, [eta], blocks, ic)


def w_values(res, w: list, shape) -> np.ndarray:
    out = np.zeros(shape)
    for t, row in enumerate(w):
        for k, x in enumerate(row):
            if isinstance(x, Var):
                out[t, k] = round(float(res.primal[x.index]))
    return out


# ---------------------------------------------------------------------------
# Benders loop


@dataclass
class RobustSolution:
    formulation: str
    status: str
    objective: float
    lb: float
    ub: float
    investments: InvestmentValues
    w: np.ndarray  # (T, B) or (S, T, B)
    investment_cost: float
    operational_cost: float  # worst-case (expected for ARSO) operational cost of the plan
    worst_case: Realization
    worst_pattern: ExtremePoint
    iterations: int
    trace: list
    recorded: list  # recorded realizations
    block_operations: list  # OperationValues of the final MP, [r][s]
    block_points: list  # OperatingPoint per block, [r][s]
    mp_investments: InvestmentValues | None = None  # plan of the final master solve
    scenario_values: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.ub - self.lb

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def write_trace(path, trace: list) -> None:
    """One JSON object per iteration."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for row in trace:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _gap_closed(lb: float, ub: float, tol: float) -> bool:
    return ub - lb <= tol * (1.0 + abs(ub))


def solve_aro(case: CaseData, bset: BudgetedSet, tol: float = 1e-6, max_iter: int = 200,
              params: SolverParams | None = None, big_m: float | None = None) -> RobustSolution:
    """Adaptive robust plan over ``bset`` (demand and PV uncertain)."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    base = nominal_point(case, bset)
    T, B = base.pl.shape
    recorded = [Realization(bset.pv_bar, bset.pl_bar)]
    seen = {recorded[0].digest()}
    lb, ub = -math.inf, math.inf
    best = None
    trace = []
    warnings = []
    status = MAX_ITER
    for it in range(1, max_iter + 1):
        t0 = time.perf_counter()
        mp = build_master(case, [apply_realization(base, r) for r in recorded])
        mres = solve(mp.model, params)
        if not mres.ok:
            raise SolveError(f"master problem: solver returned {mres.status}", mres.status)
        mp_time = time.perf_counter() - t0
        lb = max(lb, mres.objective)
        inv = extract_investment(mres, mp.inv)
        w = w_values(mres, mp.w, (T, B))

        t0 = time.perf_counter()
        dsp = build_dsp(case, bset, inv, w, big_m)
        dres = solve_dsp(dsp, bset, params)
        dsp_time = time.perf_counter() - t0
        if dres.bigm_active:
            warnings.append(f"iteration {it}: Big-M bound active")
        ic = investment_cost(case, inv)
        cand = ic + dres.value
        if cand < ub:
            ub = cand
            best = (inv, w, dres, ic)
        trace.append({"iter": it, "lb": lb, "ub": ub, "mp_time_s": mp_time, "dsp_time_s": dsp_time,
                      "u_star_digest": dres.extreme_point.digest(), "bigm_residual": dres.bigm_residual})
        log.info("aro iter %d lb=%.6f ub=%.6f", it, lb, ub)
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
        formulation="aro", status=status, objective=ub, lb=lb, ub=ub, investments=inv, w=w,
        investment_cost=ic, operational_cost=dres.value, worst_case=dres.realization,
        worst_pattern=dres.extreme_point, iterations=len(trace), trace=trace, recorded=list(recorded),
        block_operations=[[extract_operation(mres, b) for b in row] for row in mp.blocks],
        block_points=[[b.point for b in row] for row in mp.blocks], warnings=warnings,
        mp_investments=extract_investment(mres, mp.inv),
    )


def mp_feasibility(case: CaseData, sol: RobustSolution, tol: float = 1e-6) -> list[dict]:
    """Feasibility reports of the final master's operation blocks at their recorded points."""
    from .deterministic import check_feasibility

    out = []
    for ops, points in zip(sol.block_operations, sol.block_points):
        for op, pt in zip(ops, points):
            out.append(check_feasibility(case, sol.mp_investments, op, pt, tol))
    return out
