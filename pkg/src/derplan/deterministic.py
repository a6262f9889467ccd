"""Deterministic siting/sizing MILP and the operational block shared by all formulations.

Every formulation in the package is assembled from two pieces:

* :func:`add_investment` -- installation binaries and capacities with their limits;
* :func:`add_operation` -- one horizon of lossless DistFlow operation for a given
  :class:`~derplan.case.OperatingPoint`.

Investment quantities passed to :func:`add_operation` may be model variables or
plain numbers, so the same code builds the master problem blocks and the
fixed-investment subproblem that is later dualised.  All variable bounds are
written as rows; operation variables are either non-negative or free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .case import CaseData, OperatingPoint, polygon_coefficients
from .milp import EQ, GE, INF, LE, LinExpr, LinearModel, ModelError, SolveResult, SolverParams, Var, solve


@dataclass
class InvestmentVars:
    """Per-bus investment handles; entries are :class:`Var` or ``0.0`` where the technology is barred."""

    nu_pv: list
    nu_bt: list
    gamma_pv: list
    gamma_bt: list


@dataclass(frozen=True)
class InvestmentValues:
    nu_pv: np.ndarray
    nu_bt: np.ndarray
    gamma_pv: np.ndarray
    gamma_bt: np.ndarray

    @classmethod
    def zeros(cls, n_bus: int) -> "InvestmentValues":
        z = np.zeros(n_bus)
        return cls(z, z.copy(), z.copy(), z.copy())

    def as_dict(self, bus_ids) -> dict:
        return {
            "pv_kw": {b: float(v) for b, v in zip(bus_ids, self.gamma_pv) if v > 0},
            "bess_kwh": {b: float(v) for b, v in zip(bus_ids, self.gamma_bt) if v > 0},
        }


@dataclass(frozen=True)
class OperationValues:
    """Dispatch arrays, shaped (T, B) per bus or (T, L) per line."""

    pg: np.ndarray
    qg: np.ndarray
    pv: np.ndarray
    ch: np.ndarray
    ds: np.ndarray
    soc: np.ndarray
    w: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    p: np.ndarray
    q: np.ndarray
    delta_p: np.ndarray
    delta_q: np.ndarray


@dataclass
class OperationBlock:
    """Index bookkeeping for one operational horizon inside a model.

    Index arrays hold the model column of each quantity or ``-1`` where the
    quantity is absent (identically zero).  ``pl_rows``/``pv_rows`` locate the
    rows whose right-hand side depends on demand / PV availability.
    """

    point: OperatingPoint
    prefix: str
    pg: np.ndarray
    qg: np.ndarray
    pv: np.ndarray
    ch: np.ndarray
    ds: np.ndarray
    soc: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    p: np.ndarray
    q: np.ndarray
    w: np.ndarray  # column of w, -1 when w is a number
    w_fixed: np.ndarray  # numeric w where w is a number
    cost: LinExpr
    pl_rows: np.ndarray
    pv_rows: np.ndarray
    pv_gain: np.ndarray = field(default=None)  # (B,) rhs of pv row per unit of PV availability


def _is_var(x) -> bool:
    return isinstance(x, LinExpr) and bool(x.terms)


def add_investment(model: LinearModel, case: CaseData, prefix: str = "") -> InvestmentVars:
    """Installation decisions with capacity thresholds and count limits."""
    tech = case.tech
    inv = InvestmentVars([], [], [], [])
    for tag, allowed_attr, nus, gammas, n_max in (
        ("pv", "pv_allowed", inv.nu_pv, inv.gamma_pv, tech.n_pv_max),
        ("bt", "bess_allowed", inv.nu_bt, inv.gamma_bt, tech.n_bt_max),
    ):
        for bus in case.network.buses:
            if not getattr(bus, allowed_attr) or tech.cap_max <= 0:
                nus.append(0.0)
                gammas.append(0.0)
                continue
            nu = model.add_var(f"{prefix}nu_{tag}[{bus.id}]", binary=True)
            g = model.add_var(f"{prefix}gamma_{tag}[{bus.id}]", 0.0, tech.cap_max)
            model.add_constr(g - tech.cap_max * nu, LE, 0.0, f"{prefix}capmax_{tag}[{bus.id}]")
            if tech.cap_min > 0:
                model.add_constr(g - tech.cap_min * nu, GE, 0.0, f"{prefix}capmin_{tag}[{bus.id}]")
            nus.append(nu)
            gammas.append(g)
        live = [n for n in nus if _is_var(n)]
        if live:
            model.add_constr(sum(live, LinExpr()), LE, n_max, f"{prefix}count_{tag}")
    return inv


def investment_expr(case: CaseData, inv) -> LinExpr:
    """Investment cost as an expression (or constant for numeric plans)."""
    c = case.costs
    out = LinExpr()
    for k in range(case.network.n_bus):
        out.iadd(inv.gamma_pv[k], c.c_pv[k])
        out.iadd(inv.nu_pv[k], c.i_pv[k])
        out.iadd(inv.gamma_bt[k], c.c_bt[k])
        out.iadd(inv.nu_bt[k], c.i_bt[k])
    return out


def fixed_investment(values: InvestmentValues) -> InvestmentVars:
    """Wrap numeric investment values so :func:`add_operation` treats them as data."""
    return InvestmentVars(
        [float(v) for v in values.nu_pv],
        [float(v) for v in values.nu_bt],
        [float(v) for v in values.gamma_pv],
        [float(v) for v in values.gamma_bt],
    )


def add_operation(
    model: LinearModel,
    case: CaseData,
    point: OperatingPoint,
    inv: InvestmentVars,
    w=None,
    prefix: str = "",
    weight: float = 1.0,
    soc_init=None,
) -> OperationBlock:
    """Add one horizon of operation; returns the block with its (weighted) cost.

    ``w`` is ``None`` (fresh binaries per bus/slot, linked to the battery
    installation), or a (T, B) array of numbers / :class:`Var` handles shared
    with other blocks; shared handles are linked by the caller (:func:`add_shared_w`).  ``soc_init`` overrides
    the initial stored energy (used when horizons are chained).
    """
    net, tech = case.network, case.tech
    T, B, L = point.horizon, net.n_bus, net.n_line
    if point.pl.shape != (T, B) or point.ql.shape != (T, B) or point.price.shape != (T,):
        raise ModelError("operating point dimensions do not match the network")
    ends = net.line_ends()
    sub = net.index(net.substation)
    cuts = polygon_coefficients(case.segments)
    sb = net.s_base
    dt = tech.dt
    P = prefix

    def cols(shape):
        return np.full(shape, -1, dtype=np.int64)

    pg, qg, pv, ch, ds, soc, wv = (cols((T, B)) for _ in range(7))
    v, th = cols((T, B)), cols((T, B))
    p, q = cols((T, L)), cols((T, L))
    w_fixed = np.zeros((T, B))
    pl_rows, pv_rows = cols((T, B)), cols((T, B))
    pv_gain = np.zeros(B)
    cost = LinExpr()

    has_grid = [b.pg_max > 0 or b.qg_min != 0 or b.qg_max != 0 for b in net.buses]
    has_pv = [_is_var(inv.gamma_pv[k]) or float(_const(inv.gamma_pv[k])) > 0 for k in range(B)]
    has_bt = [_is_var(inv.gamma_bt[k]) or float(_const(inv.gamma_bt[k])) > 0 for k in range(B)]

    out_lines = [[] for _ in range(B)]
    in_lines = [[] for _ in range(B)]
    for l, (i, j) in enumerate(ends):
        out_lines[i].append(l)
        in_lines[j].append(l)

    for t in range(T):
        for k, bus in enumerate(net.buses):
            tag = f"[{bus.id},{t}]"
            if has_grid[k]:
                pg[t, k] = model.add_var(f"{P}pg{tag}").index
                qg[t, k] = model.add_var(f"{P}qg{tag}", -INF).index
            if has_pv[k]:
                pv[t, k] = model.add_var(f"{P}pv{tag}").index
            if has_bt[k]:
                ch[t, k] = model.add_var(f"{P}ch{tag}").index
                ds[t, k] = model.add_var(f"{P}ds{tag}").index
                soc[t, k] = model.add_var(f"{P}soc{tag}").index
                if w is None:
                    wv[t, k] = model.add_var(f"{P}w{tag}", binary=True).index
                elif _is_var(w[t][k]):
                    wv[t, k] = next(iter(w[t][k].terms))
                else:
                    w_fixed[t, k] = float(_const(w[t][k]))
            v[t, k] = model.add_var(f"{P}v{tag}").index
            th[t, k] = model.add_var(f"{P}theta{tag}", -INF).index
        for l, ln in enumerate(net.lines):
            tag = f"[{ln.from_bus}-{ln.to_bus},{t}]"
            p[t, l] = model.add_var(f"{P}p{tag}", -INF).index
            q[t, l] = model.add_var(f"{P}q{tag}", -INF).index

    def X(idx) -> LinExpr:
        return LinExpr({int(idx): 1.0}) if idx >= 0 else LinExpr()

    for t in range(T):
        for k, bus in enumerate(net.buses):
            tag = f"[{bus.id},{t}]"
            # active / reactive balance: outflow - inflow - injections = -load
            ea, eb = LinExpr(), LinExpr()
            for l in out_lines[k]:
                ea.add_term(int(p[t, l]), 1.0)
                eb.add_term(int(q[t, l]), 1.0)
            for l in in_lines[k]:
                ea.add_term(int(p[t, l]), -1.0)
                eb.add_term(int(q[t, l]), -1.0)
            for idx, sgn in ((pg[t, k], -1.0), (pv[t, k], -1.0), (ds[t, k], -1.0), (ch[t, k], 1.0)):
                if idx >= 0:
                    ea.add_term(int(idx), sgn)
            if qg[t, k] >= 0:
                eb.add_term(int(qg[t, k]), -1.0)
            pl_rows[t, k] = model.add_constr(ea, EQ, -float(point.pl[t, k]), f"{P}a{tag}")
            model.add_constr(eb, EQ, -float(point.ql[t, k]), f"{P}b{tag}")

            if has_grid[k]:
                model.add_constr(X(pg[t, k]), LE, bus.pg_max, f"{P}f{tag}")
                model.add_constr(X(qg[t, k]), GE, bus.qg_min, f"{P}gmin{tag}")
                model.add_constr(X(qg[t, k]), LE, bus.qg_max, f"{P}gmax{tag}")
                cost.add_term(int(pg[t, k]), weight * float(point.price[t]))
            model.add_constr(X(v[t, k]), GE, bus.v_min, f"{P}hmin{tag}")
            model.add_constr(X(v[t, k]), LE, bus.v_max, f"{P}hmax{tag}")
            model.add_constr(X(th[t, k]), GE, bus.theta_min, f"{P}nmin{tag}")
            model.add_constr(X(th[t, k]), LE, bus.theta_max, f"{P}nmax{tag}")

            if has_pv[k]:
                gpv = inv.gamma_pv[k]
                expr = X(pv[t, k]) - float(point.pv[t]) * gpv
                pv_rows[t, k] = model.add_constr(expr, LE, 0.0, f"{P}i{tag}")
                pv_gain[k] = 0.0 if _is_var(gpv) else float(_const(gpv))
                cost.add_term(int(pv[t, k]), weight * case.costs.oc_pv)

            if has_bt[k]:
                gbt, nbt = inv.gamma_bt[k], inv.nu_bt[k]
                e = X(soc[t, k]) - tech.eff_charge * dt * X(ch[t, k]) + (dt / tech.eff_discharge) * X(ds[t, k])
                if t == 0:
                    e = e - (tech.soc_init * gbt if soc_init is None else soc_init[k])
                else:
                    e = e - X(soc[t - 1, k])
                model.add_constr(e, EQ, 0.0, f"{P}j{tag}")
                model.add_constr(X(soc[t, k]) - tech.soc_min * gbt, GE, 0.0, f"{P}kmin{tag}")
                model.add_constr(X(soc[t, k]) - tech.soc_max * gbt, LE, 0.0, f"{P}kmax{tag}")
                if tech.cyclic_soc and t == T - 1:
                    init = tech.soc_init * gbt if soc_init is None else soc_init[k]
                    model.add_constr(X(soc[t, k]) - init, GE, 0.0, f"{P}cyc{tag}")
                wexpr = X(wv[t, k]) if wv[t, k] >= 0 else LinExpr(const=w_fixed[t, k])
                model.add_constr(X(ch[t, k]) - tech.pb * wexpr, LE, 0.0, f"{P}l{tag}")
                model.add_constr(X(ds[t, k]) + tech.pb * wexpr - tech.pb * nbt, LE, 0.0, f"{P}m{tag}")
                if w is None:
                    model.add_constr(wexpr - nbt, LE, 0.0, f"{P}wlink{tag}")
                cost.add_term(int(ds[t, k]), weight * case.costs.oc_bt)

        # slack reference
        model.add_constr(X(v[t, sub]), EQ, net.v_ref**2, f"{P}vref[{t}]")
        model.add_constr(X(th[t, sub]), EQ, 0.0, f"{P}thref[{t}]")

        for l, ln in enumerate(net.lines):
            i, j = ends[l]
            tag = f"[{ln.from_bus}-{ln.to_bus},{t}]"
            e = X(v[t, j]) - X(v[t, i])
            e.add_term(int(p[t, l]), 2.0 * ln.r / sb).add_term(int(q[t, l]), 2.0 * ln.x / sb)
            model.add_constr(e, EQ, 0.0, f"{P}c{tag}")
            e = X(th[t, i]) - X(th[t, j])
            e.add_term(int(p[t, l]), -ln.x / sb).add_term(int(q[t, l]), ln.r / sb)
            model.add_constr(e, EQ, 0.0, f"{P}d{tag}")
            for r, cut in enumerate(cuts):
                e = LinExpr()
                e.add_term(int(p[t, l]), cut.a).add_term(int(q[t, l]), cut.b)
                model.add_constr(e, LE, -ln.s_max * cut.c, f"{P}e{r}{tag}")

    return OperationBlock(point, prefix, pg, qg, pv, ch, ds, soc, v, th, p, q, wv, w_fixed, cost,
                          pl_rows, pv_rows, pv_gain)


def add_shared_w(model: LinearModel, case: CaseData, inv: InvestmentVars, horizon: int,
                 prefix: str = "") -> list:
    """Charging indicators shared by several operation blocks, with their installation link."""
    w = []
    for t in range(horizon):
        row = []
        for k, bus in enumerate(case.network.buses):
            nbt = inv.nu_bt[k]
            if not (_is_var(inv.gamma_bt[k]) or _const(inv.gamma_bt[k]) > 0):
                row.append(0.0)
                continue
            var = model.add_var(f"{prefix}w[{bus.id},{t}]", binary=True)
            model.add_constr(var - nbt, LE, 0.0, f"{prefix}wlink[{bus.id},{t}]")
            row.append(var)
        w.append(row)
    return w


def _const(x) -> float:
    return x.const if isinstance(x, LinExpr) else float(x)


# ---------------------------------------------------------------------------


@dataclass
class DeterministicModel:
    model: LinearModel
    inv: InvestmentVars
    block: OperationBlock
    invest_cost: LinExpr


def build_deterministic(case: CaseData, point: OperatingPoint, extra_rows=None) -> DeterministicModel:
    """Single-horizon planning MILP: investment cost plus operational cost at ``point``."""
    if point.pl.shape != (point.horizon, case.network.n_bus):
        raise ModelError("operating point dimensions do not match the network")
    m = LinearModel(f"{case.name}-det")
    inv = add_investment(m, case)
    block = add_operation(m, case, point, inv)
    ic = investment_expr(case, inv)
    m.set_objective(ic + block.cost)
    return DeterministicModel(m, inv, block, ic)


@dataclass
class PlanSolution:
    """Investment plan with its cost split and (optionally) the dispatch."""

    formulation: str
    status: str
    objective: float
    investment_cost: float
    operational_cost: float
    investments: InvestmentValues
    operations: list = field(default_factory=list)  # OperationValues per horizon/scenario
    extra: dict = field(default_factory=dict)


class SolveError(RuntimeError):
    """A model that must be solvable returned a non-optimal status."""

    def __init__(self, message: str, status: str = ""):
        super().__init__(message)
        self.status = status


def solve_deterministic(case: CaseData, point: OperatingPoint | None = None,
                        params: SolverParams | None = None) -> PlanSolution:
    point = point if point is not None else case.expected_point()
    dm = build_deterministic(case, point)
    res = solve(dm.model, params)
    require_optimal(res, "deterministic model")
    inv = extract_investment(res, dm.inv)
    op = extract_operation(res, dm.block)
    return PlanSolution("det", res.status, res.objective, investment_cost(case, inv),
                        operational_cost(case, op, point), inv, [op])


def require_optimal(res: SolveResult, what: str) -> None:
    if not res.ok:
        raise SolveError(f"{what}: solver returned {res.status}", res.status)


def _val(res: SolveResult, x) -> float:
    return float(x.value(res.primal)) if isinstance(x, LinExpr) else float(x)


def extract_investment(res: SolveResult, inv: InvestmentVars) -> InvestmentValues:
    def arr(items, binary=False):
        a = np.array([_val(res, x) for x in items])
        return np.round(a) if binary else np.maximum(a, 0.0)

    return InvestmentValues(arr(inv.nu_pv, True), arr(inv.nu_bt, True), arr(inv.gamma_pv), arr(inv.gamma_bt))


def extract_operation(res: SolveResult, block: OperationBlock) -> OperationValues:
    x = res.primal

    def take(ix):
        out = np.where(ix >= 0, x[np.maximum(ix, 0)], 0.0)
        return out + 0.0

    pl, ql = block.point.pl, block.point.ql
    pg, qg, pv, ch, ds = take(block.pg), take(block.qg), take(block.pv), take(block.ch), take(block.ds)
    w = np.where(block.w >= 0, np.round(take(block.w)), block.w_fixed)
    return OperationValues(
        pg=pg, qg=qg, pv=pv, ch=ch, ds=ds, soc=take(block.soc), w=w,
        v=take(block.v), theta=take(block.theta), p=take(block.p), q=take(block.q),
        delta_p=pg + pv - pl + ds - ch, delta_q=qg - ql,
    )


def investment_cost(case: CaseData, inv: InvestmentValues) -> float:
    c = case.costs
    return float(inv.gamma_pv @ c.c_pv + inv.nu_pv @ c.i_pv + inv.gamma_bt @ c.c_bt + inv.nu_bt @ c.i_bt)


def operational_cost(case: CaseData, op: OperationValues, point: OperatingPoint) -> float:
    return float(point.price @ op.pg.sum(axis=1) + case.costs.oc_pv * op.pv.sum()
                 + case.costs.oc_bt * op.ds.sum())


# ---------------------------------------------------------------------------


def check_feasibility(case: CaseData, inv: InvestmentValues, op: OperationValues,
                      point: OperatingPoint, tol: float = 1e-6, soc_init=None) -> dict:
    """Maximum violation of each constraint family at a candidate point.

    Returns ``{"residuals": {family: max_violation}, "violated": [families], "feasible": bool}``.
    """
    net, tech = case.network, case.tech
    ends = np.array(net.line_ends(), dtype=int).reshape(-1, 2)
    sub = net.index(net.substation)
    sb, dt = net.s_base, tech.dt
    pos = lambda a: float(np.max(a, initial=0.0)) if np.size(a) else 0.0  # noqa: E731
    absmax = lambda a: float(np.max(np.abs(a), initial=0.0)) if np.size(a) else 0.0  # noqa: E731

    T, B = op.pg.shape
    flow_out_p = np.zeros((T, B))
    flow_out_q = np.zeros((T, B))
    for l, (i, j) in enumerate(ends):
        flow_out_p[:, i] += op.p[:, l]
        flow_out_p[:, j] -= op.p[:, l]
        flow_out_q[:, i] += op.q[:, l]
        flow_out_q[:, j] -= op.q[:, l]

    pg_max = np.array([b.pg_max for b in net.buses])
    qg_min = np.array([b.qg_min for b in net.buses])
    qg_max = np.array([b.qg_max for b in net.buses])
    v_min = np.array([b.v_min for b in net.buses])
    v_max = np.array([b.v_max for b in net.buses])
    th_min = np.array([b.theta_min for b in net.buses])
    th_max = np.array([b.theta_max for b in net.buses])
    r = np.array([ln.r for ln in net.lines]) / sb
    x = np.array([ln.x for ln in net.lines]) / sb
    s_max = np.array([ln.s_max for ln in net.lines])

    res: dict[str, float] = {}
    res["active_balance"] = absmax(flow_out_p - (op.pg + op.pv - point.pl + op.ds - op.ch))
    res["reactive_balance"] = absmax(flow_out_q - (op.qg - point.ql))
    res["grid_active_limit"] = pos(op.pg - pg_max)
    res["grid_reactive_limits"] = max(pos(qg_min - op.qg), pos(op.qg - qg_max))
    res["voltage_limits"] = max(pos(v_min - op.v), pos(op.v - v_max))
    res["angle_limits"] = max(pos(th_min - op.theta), pos(op.theta - th_max))
    res["reference_bus"] = max(absmax(op.v[:, sub] - net.v_ref**2), absmax(op.theta[:, sub]))
    if len(ends):
        i, j = ends[:, 0], ends[:, 1]
        res["voltage_drop"] = absmax(op.v[:, j] - op.v[:, i] + 2 * (r * op.p + x * op.q))
        res["angle_difference"] = absmax(op.theta[:, i] - op.theta[:, j] - (x * op.p - r * op.q))
        worst = 0.0
        for cut in polygon_coefficients(case.segments):
            worst = max(worst, pos(cut.a * op.p + cut.b * op.q + cut.c * s_max))
        res["line_capacity"] = worst
    res["pv_availability"] = pos(op.pv - np.outer(point.pv, inv.gamma_pv))
    init = tech.soc_init * inv.gamma_bt if soc_init is None else np.asarray(soc_init)
    prev = np.vstack([init[None, :], op.soc[:-1]])
    res["soc_dynamics"] = absmax(op.soc - prev - dt * (tech.eff_charge * op.ch - op.ds / tech.eff_discharge))
    res["soc_limits"] = max(pos(tech.soc_min * inv.gamma_bt - op.soc), pos(op.soc - tech.soc_max * inv.gamma_bt))
    res["terminal_soc"] = pos(init - op.soc[-1]) if tech.cyclic_soc and len(op.soc) else 0.0
    res["charge_limit"] = pos(op.ch - tech.pb * op.w)
    res["discharge_limit"] = pos(op.ds - tech.pb * (1 - op.w) + tech.pb * (1 - inv.nu_bt))
    res["charge_indicator"] = max(pos(op.w - inv.nu_bt), absmax(op.w - np.round(op.w)))
    res["nonnegativity"] = max(pos(-op.pg), pos(-op.pv), pos(-op.ch), pos(-op.ds), pos(-op.soc), pos(-op.v))
    res["installation"] = max(
        pos(tech.cap_min * inv.nu_pv - inv.gamma_pv), pos(inv.gamma_pv - tech.cap_max * inv.nu_pv),
        pos(tech.cap_min * inv.nu_bt - inv.gamma_bt), pos(inv.gamma_bt - tech.cap_max * inv.nu_bt),
        pos(inv.nu_pv.sum() - tech.n_pv_max), pos(inv.nu_bt.sum() - tech.n_bt_max),
    )
    violated = [k for k, val in res.items() if val > tol]
    return {"residuals": res, "violated": violated, "feasible": not violated}
