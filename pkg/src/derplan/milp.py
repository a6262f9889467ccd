"""Solver-agnostic linear / mixed-integer linear models.

A :class:`LinearModel` is a plain container of variables, rows and a linear
objective.  Backends translate it into a solver call and hand back a
:class:`SolveResult`.  Two backends are provided:

* ``highs``  -- HiGHS through :mod:`highspy` (default)
* ``scipy``  -- :func:`scipy.optimize.milp` / :func:`scipy.optimize.linprog`

The backend is picked with :class:`SolverParams` or the ``DERPLAN_SOLVER``
environment variable.
"""

from __future__ import annotations

import copy
import math
import os
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

INF = math.inf

LE, GE, EQ = "<=", ">=", "=="
_SENSES = (LE, GE, EQ)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
LIMIT = "limit"
ERROR = "error"


class ModelError(ValueError):
    """Raised for malformed models or invalid arguments."""


class BackendUnavailable(RuntimeError):
    """Raised when the requested solver backend cannot be imported."""


class LinExpr:
    """Sparse affine expression ``sum(coef * var) + const``."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: Mapping[int, float] | None = None, const: float = 0.0):
        self.terms = dict(terms) if terms else {}
        self.const = float(const)

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.const)

    def add_term(self, index: int, coef: float) -> "LinExpr":
        if coef:
            self.terms[index] = self.terms.get(index, 0.0) + coef
        return self

    def iadd(self, other, scale: float = 1.0) -> "LinExpr":
        """In-place ``self += scale * other``."""
        if isinstance(other, LinExpr):
            for k, v in other.terms.items():
                self.terms[k] = self.terms.get(k, 0.0) + scale * v
            self.const += scale * other.const
        else:
            self.const += scale * float(other)
        return self

    def __add__(self, other):
        return self.copy().iadd(other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.copy().iadd(other, -1.0)

    def __rsub__(self, other):
        return (-self).iadd(other)

    def __neg__(self):
        return LinExpr({k: -v for k, v in self.terms.items()}, -self.const)

    def __mul__(self, scalar):
        scalar = float(scalar)
        return LinExpr({k: scalar * v for k, v in self.terms.items()}, scalar * self.const)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(c * x[i] for i, c in self.terms.items())

    def __repr__(self) -> str:
        return f"LinExpr({len(self.terms)} terms, const={self.const:g})"


class Var(LinExpr):
    """Decision variable handle; behaves as the expression ``1 * var``."""

    __slots__ = ("index", "name")

    def __init__(self, index: int, name: str):
        super().__init__({index: 1.0})
        self.index = index
        self.name = name

    def __hash__(self):
        return hash(self.index)

    def __repr__(self) -> str:
        return f"Var({self.index}, {self.name!r})"


def quicksum(items: Iterable) -> LinExpr:
    out = LinExpr()
    for it in items:
        out.iadd(it)
    return out


@dataclass
class SolverParams:
    feas_tol: float = 1e-6
    mip_gap: float = 1e-6
    time_limit: float | None = None
    backend: str | None = None
    # Fix integers at their rounded incumbent values and re-solve the LP so that
    # continuous values are free of integrality-tolerance noise.
    polish: bool = True
    threads: int = 1

    def resolved_backend(self) -> str:
        return (self.backend or os.environ.get("DERPLAN_SOLVER") or "highs").lower()


@dataclass
class SolveResult:
    status: str
    objective: float = math.nan
    primal: np.ndarray | None = None
    dual: np.ndarray | None = None
    reduced_cost: np.ndarray | None = None
    solve_time: float = 0.0
    bound: float = math.nan
    backend: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def value(self, item) -> float | np.ndarray:
        """Value of a Var, a LinExpr, or an integer index array."""
        if isinstance(item, LinExpr):
            return item.value(self.primal)
        return self.primal[np.asarray(item)]


class LinearModel:
    """Container for an LP/MILP: bounded variables, named rows, linear objective."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.binary: list[bool] = []
        self.row_index: list[np.ndarray] = []
        self.row_coef: list[np.ndarray] = []
        self.row_sense: list[str] = []
        self.row_rhs: list[float] = []
        self.row_names: list[str] = []
        self._row_lookup: dict[str, int] = {}
        self.objective = LinExpr()
        self.sense = "min"

    # -- construction -------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_rows(self) -> int:
        return len(self.row_names)

    @property
    def is_mip(self) -> bool:
        return any(self.binary)

    def add_var(self, name: str, lb: float = 0.0, ub: float = INF, binary: bool = False) -> Var:
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise ModelError(f"variable {name}: lb {lb} > ub {ub}")
        idx = len(self.var_names)
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.binary.append(bool(binary))
        return Var(idx, name)

    def add_constr(self, expr, sense: str, rhs: float = 0.0, name: str | None = None) -> int:
        """Add ``expr sense rhs``; constants in ``expr`` move to the right-hand side."""
        if sense not in _SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        if not isinstance(expr, LinExpr):
            expr = LinExpr(const=float(expr))
        name = name if name is not None else f"r{self.num_rows}"
        if name in self._row_lookup:
            raise ModelError(f"duplicate constraint name {name!r}")
        items = [(k, v) for k, v in expr.terms.items() if v != 0.0]
        idx = np.fromiter((k for k, _ in items), dtype=np.int64, count=len(items))
        coef = np.fromiter((v for _, v in items), dtype=float, count=len(items))
        if idx.size and (idx.min() < 0 or idx.max() >= self.num_vars):
            raise ModelError(f"constraint {name!r} references an undeclared variable")
        r = self.num_rows
        self.row_index.append(idx)
        self.row_coef.append(coef)
        self.row_sense.append(sense)
        self.row_rhs.append(float(rhs) - expr.const)
        self.row_names.append(name)
        self._row_lookup[name] = r
        return r

    def row(self, name: str) -> int:
        return self._row_lookup[name]

    def set_objective(self, expr, sense: str = "min") -> None:
        if sense not in ("min", "max"):
            raise ModelError(f"objective sense must be min or max, got {sense!r}")
        self.objective = expr.copy() if isinstance(expr, LinExpr) else LinExpr(const=float(expr))
        for k in self.objective.terms:
            if not 0 <= k < self.num_vars:
                raise ModelError("objective references an undeclared variable")
        self.sense = sense

    def copy(self) -> "LinearModel":
        out = copy.copy(self)
        out.lb = list(self.lb)
        out.ub = list(self.ub)
        out.binary = list(self.binary)
        out.var_names = list(self.var_names)
        out.row_index = list(self.row_index)
        out.row_coef = list(self.row_coef)
        out.row_sense = list(self.row_sense)
        out.row_rhs = list(self.row_rhs)
        out.row_names = list(self.row_names)
        out._row_lookup = dict(self._row_lookup)
        out.objective = self.objective.copy()
        return out

    # -- matrix views ---------------------------------------------------------
    def matrix(self) -> sp.csr_matrix:
        n, m = self.num_vars, self.num_rows
        counts = np.fromiter((len(ix) for ix in self.row_index), dtype=np.int64, count=m)
        indptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        indices = np.concatenate(self.row_index) if m else np.zeros(0, dtype=np.int64)
        data = np.concatenate(self.row_coef) if m else np.zeros(0)
        A = sp.csr_matrix((data, indices, indptr), shape=(m, n))
        A.sum_duplicates()
        return A

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        rhs = np.asarray(self.row_rhs, dtype=float)
        sense = np.asarray(self.row_sense)
        lo = np.where(sense == LE, -INF, rhs)
        hi = np.where(sense == GE, INF, rhs)
        return lo, hi

    def cost_vector(self) -> np.ndarray:
        c = np.zeros(self.num_vars)
        for k, v in self.objective.terms.items():
            c[k] += v
        return c

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Per-row violation (>= 0) of a candidate point."""
        if self.num_rows == 0:
            return np.zeros(0)
        ax = self.matrix() @ x
        lo, hi = self.row_bounds()
        return np.maximum(np.maximum(lo - ax, ax - hi), 0.0)

    def dual_objective(self, result: SolveResult) -> float:
        """Lagrangian dual value implied by the row duals and reduced costs of an LP.

        Duals are in the min convention: for a max model they belong to ``min -c.x``.
        """
        if result.dual is None or result.reduced_cost is None:
            raise ModelError("dual values unavailable")
        lo, hi = self.row_bounds()
        y = result.dual
        row_part = np.where(y > 0, np.where(np.isfinite(lo), lo, 0.0), np.where(np.isfinite(hi), hi, 0.0))
        total = float(np.dot(y, row_part))
        d = result.reduced_cost
        lb, ub = np.asarray(self.lb), np.asarray(self.ub)
        bound = np.where(d > 0, lb, ub)
        bound = np.where(np.isfinite(bound), bound, 0.0)
        total += float(np.dot(d, bound))
        # duals follow the min convention, i.e. of ``min -c.x`` for max models
        return (-total if self.sense == "max" else total) + self.objective.const


def fix_variables(model: LinearModel, assignments: Mapping) -> LinearModel:
    """Return a copy of ``model`` with each assigned variable's bounds collapsed.

    Keys may be :class:`Var` handles or integer indices.
    """
    out = model.copy()
    for key, value in assignments.items():
        idx = key.index if isinstance(key, Var) else int(key)
        value = float(value)
        tol = 1e-9 * (1.0 + abs(value))
        if value < model.lb[idx] - tol or value > model.ub[idx] + tol:
            raise ModelError(
                f"cannot fix {model.var_names[idx]} to {value}: outside [{model.lb[idx]}, {model.ub[idx]}]"
            )
        value = min(max(value, model.lb[idx]), model.ub[idx])
        out.lb[idx] = out.ub[idx] = value
    return out


def dualize(model: LinearModel, name: str = "dual") -> tuple[LinearModel, list[Var]]:
    """Build the LP dual of a minimisation LP.

    Variables of ``model`` must be either non-negative (``lb=0``) or free, with
    ``ub=+inf``; every other bound has to be written as a row.  The returned
    model maximises ``sum(rhs * pi)`` with ``pi >= 0`` on ``>=`` rows,
    ``pi <= 0`` on ``<=`` rows and ``pi`` free on equalities; the dual variable
    of row ``r`` is ``duals[r]``.
    """
    if model.sense != "min":
        raise ModelError("dualize expects a minimisation model")
    if model.is_mip:
        raise ModelError("dualize expects a continuous model")
    for j in range(model.num_vars):
        if model.ub[j] != INF or model.lb[j] not in (0.0, -INF):
            raise ModelError(f"variable {model.var_names[j]} has bounds not expressible as a sign restriction")

    dual = LinearModel(name)
    duals: list[Var] = []
    for r in range(model.num_rows):
        sense = model.row_sense[r]
        lb, ub = {GE: (0.0, INF), LE: (-INF, 0.0), EQ: (-INF, INF)}[sense]
        duals.append(dual.add_var(f"pi[{model.row_names[r]}]", lb, ub))

    At = model.matrix().T.tocsr()
    c = model.cost_vector()
    for j in range(model.num_vars):
        lo, hi = At.indptr[j], At.indptr[j + 1]
        expr = LinExpr({int(r): float(a) for r, a in zip(At.indices[lo:hi], At.data[lo:hi])})
        sense = LE if model.lb[j] == 0.0 else EQ
        dual.add_constr(expr, sense, c[j], name=f"col[{model.var_names[j]}]")

    obj = LinExpr({d.index: model.row_rhs[r] for r, d in enumerate(duals) if model.row_rhs[r] != 0.0})
    obj.const = model.objective.const
    dual.set_objective(obj, "max")
    return dual, duals


# ---------------------------------------------------------------------------
# backends


def _status_from_highs(highspy, status) -> str:
    S = highspy.HighsModelStatus
    if status == S.kOptimal:
        return OPTIMAL
    if status == S.kInfeasible:
        return INFEASIBLE
    if status in (S.kUnbounded, S.kUnboundedOrInfeasible):
        return UNBOUNDED
    if status in (S.kTimeLimit, S.kIterationLimit, S.kSolutionLimit, S.kInterrupt):
        return LIMIT
    return ERROR


def _import_highspy():
    try:
        import highspy
    except ImportError as exc:  # pragma: no cover - exercised only without highspy
        raise BackendUnavailable("highspy is not installed; set DERPLAN_SOLVER=scipy") from exc
    return highspy


class HighsSession:
    """A model loaded into a persistent HiGHS instance.

    Used where many LPs differ only in right-hand sides (brute-force oracles).
    """

    def __init__(self, model: LinearModel, params: SolverParams | None = None):
        self.highspy = _import_highspy()
        self.model = model
        self.params = params or SolverParams()
        self.h = self.highspy.Highs()
        _configure_highs(self.h, self.params)
        _pass_model(self.highspy, self.h, model, model.lb, model.ub, model.binary)
        self._lo, self._hi = model.row_bounds()

    def set_rhs(self, rows: Iterable[int], values: Iterable[float]) -> None:
        for r, v in zip(rows, values):
            sense = self.model.row_sense[r]
            lo = -INF if sense == LE else v
            hi = INF if sense == GE else v
            self.h.changeRowBounds(int(r), lo, hi)

    def solve(self) -> SolveResult:
        t0 = time.perf_counter()
        self.h.run()
        status = _status_from_highs(self.highspy, self.h.getModelStatus())
        res = SolveResult(status=status, solve_time=time.perf_counter() - t0, backend="highs")
        if status == OPTIMAL:
            sol = self.h.getSolution()
            res.primal = np.asarray(sol.col_value)
            res.objective = float(self.h.getInfo().objective_function_value)
        return res


def _configure_highs(h, params: SolverParams) -> None:
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", int(params.threads))
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("primal_feasibility_tolerance", params.feas_tol)
    h.setOptionValue("dual_feasibility_tolerance", min(params.feas_tol, 1e-7))
    h.setOptionValue("mip_feasibility_tolerance", params.feas_tol)
    h.setOptionValue("mip_rel_gap", params.mip_gap)
    h.setOptionValue("mip_abs_gap", 1e-9)
    if params.time_limit is not None:
        h.setOptionValue("time_limit", float(params.time_limit))


def _pass_model(highspy, h, model: LinearModel, lb, ub, binary) -> None:
    A = model.matrix().tocsc()
    lp = highspy.HighsLp()
    lp.num_col_ = model.num_vars
    lp.num_row_ = model.num_rows
    lp.col_cost_ = model.cost_vector()
    lp.col_lower_ = np.asarray(lb, dtype=float)
    lp.col_upper_ = np.asarray(ub, dtype=float)
    lo, hi = model.row_bounds()
    lp.row_lower_ = lo
    lp.row_upper_ = hi
    lp.offset_ = model.objective.const
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr.astype(np.int32)
    lp.a_matrix_.index_ = A.indices.astype(np.int32)
    lp.a_matrix_.value_ = A.data
    if any(binary):
        lp.integrality_ = [
            highspy.HighsVarType.kInteger if b else highspy.HighsVarType.kContinuous for b in binary
        ]
    lp.sense_ = highspy.ObjSense.kMaximize if model.sense == "max" else highspy.ObjSense.kMinimize
    h.passModel(lp)


def _solve_highs(model: LinearModel, params: SolverParams, lb, ub, binary) -> SolveResult:
    highspy = _import_highspy()
    h = highspy.Highs()
    _configure_highs(h, params)
    _pass_model(highspy, h, model, lb, ub, binary)
    t0 = time.perf_counter()
    h.run()
    elapsed = time.perf_counter() - t0
    status = _status_from_highs(highspy, h.getModelStatus())
    res = SolveResult(status=status, solve_time=elapsed, backend="highs")
    info = h.getInfo()
    sol = h.getSolution()
    if status == LIMIT and info.primal_solution_status != 2:
        return res
    if status in (OPTIMAL, LIMIT):
        res.primal = np.asarray(sol.col_value)
        res.objective = float(info.objective_function_value)
        if any(binary):
            res.bound = float(info.mip_dual_bound)
        elif sol.dual_valid:
            res.dual = np.asarray(sol.row_dual)
            res.reduced_cost = np.asarray(sol.col_dual)
            if model.sense == "max":
                # report duals in the min-problem convention
                res.dual = -res.dual
                res.reduced_cost = -res.reduced_cost
    return res


def _solve_scipy(model: LinearModel, params: SolverParams, lb, ub, binary) -> SolveResult:
    from scipy.optimize import Bounds, LinearConstraint, linprog, milp

    c = model.cost_vector()
    sign = -1.0 if model.sense == "max" else 1.0
    A = model.matrix()
    lo, hi = model.row_bounds()
    t0 = time.perf_counter()
    if any(binary):
        opts = {"mip_rel_gap": params.mip_gap, "disp": False}
        if params.time_limit is not None:
            opts["time_limit"] = params.time_limit
        cons = [LinearConstraint(A, lo, hi)] if model.num_rows else []
        r = milp(sign * c, constraints=cons, integrality=np.asarray(binary, dtype=int),
                 bounds=Bounds(np.asarray(lb), np.asarray(ub)), options=opts)
        status = {0: OPTIMAL, 1: LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}.get(r.status, ERROR)
        res = SolveResult(status=status, solve_time=time.perf_counter() - t0, backend="scipy")
        if r.x is not None:
            res.primal = np.asarray(r.x)
            res.objective = float(c @ r.x) + model.objective.const
        return res

    sense = np.asarray(model.row_sense)
    rhs = np.asarray(model.row_rhs, dtype=float)
    le, ge, eq = sense == LE, sense == GE, sense == EQ
    A_ub = sp.vstack([A[le], -A[ge]]).tocsr() if (le.any() or ge.any()) else None
    b_ub = np.concatenate([rhs[le], -rhs[ge]]) if A_ub is not None else None
    A_eq = A[eq] if eq.any() else None
    b_eq = rhs[eq] if eq.any() else None
    bounds = list(zip([None if not np.isfinite(v) else v for v in lb],
                      [None if not np.isfinite(v) else v for v in ub]))
    opts = {"primal_feasibility_tolerance": params.feas_tol}
    if params.time_limit is not None:
        opts["time_limit"] = params.time_limit
    r = linprog(sign * c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                method="highs", options=opts)
    status = {0: OPTIMAL, 1: LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}.get(r.status, ERROR)
    res = SolveResult(status=status, solve_time=time.perf_counter() - t0, backend="scipy")
    if status == OPTIMAL:
        res.primal = np.asarray(r.x)
        res.objective = float(c @ r.x) + model.objective.const
        y = np.zeros(model.num_rows)
        nle, nge = int(le.sum()), int(ge.sum())
        if A_ub is not None:
            m_ub = np.asarray(r.ineqlin.marginals)
            y[le] = m_ub[:nle]
            y[ge] = -m_ub[nle:nle + nge]
        if A_eq is not None:
            y[eq] = np.asarray(r.eqlin.marginals)
        d = np.asarray(r.lower.marginals) + np.asarray(r.upper.marginals)
        # linprog minimised sign*c, so these are already min-convention duals
        res.dual, res.reduced_cost = y, d
    return res


_BACKENDS = {"highs": _solve_highs, "scipy": _solve_scipy}


def solve(model: LinearModel, params: SolverParams | None = None) -> SolveResult:
    """Solve ``model``; see :class:`SolveResult` for the returned fields.

    For MILPs with ``params.polish`` the integer variables are fixed at their
    rounded incumbent and the remaining LP is re-solved, so continuous values
    are exact for that integer assignment.  Duals are only reported for LPs.
    """
    params = params or SolverParams()
    backend = params.resolved_backend()
    if backend not in _BACKENDS:
        raise BackendUnavailable(f"unknown solver backend {backend!r}")
    if not isinstance(model, LinearModel):
        raise ModelError("solve expects a LinearModel")
    run = _BACKENDS[backend]
    res = run(model, params, model.lb, model.ub, model.binary)
    if not (model.is_mip and params.polish and res.primal is not None):
        return res

    ints = np.flatnonzero(model.binary)
    fixed = np.round(res.primal[ints])
    lb = np.asarray(model.lb, dtype=float).copy()
    ub = np.asarray(model.ub, dtype=float).copy()
    lb[ints] = fixed
    ub[ints] = fixed
    lp = run(model, params, lb, ub, [False] * model.num_vars)
    if lp.status != OPTIMAL:
        return res
    lp.primal[ints] = fixed
    lp.status = res.status
    lp.bound = res.bound
    lp.solve_time += res.solve_time
    lp.dual = lp.reduced_cost = None
    return lp
