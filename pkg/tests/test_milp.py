import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from derplan.milp import (
    EQ,
    GE,
    INF,
    INFEASIBLE,
    LE,
    OPTIMAL,
    LinearModel,
    ModelError,
    SolverParams,
    dualize,
    fix_variables,
    quicksum,
    solve,
)

BACKENDS = ["highs", "scipy"]


@pytest.mark.parametrize("backend", BACKENDS)
def test_single_variable_lp(backend):
    m = LinearModel()
    x = m.add_var("x", -INF)
    m.add_constr(x, GE, 3)
    m.set_objective(x)
    res = solve(m, SolverParams(backend=backend))
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(3.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_box_milp(backend):
    m = LinearModel()
    x = m.add_var("x", binary=True)
    y = m.add_var("y", binary=True)
    m.add_constr(x, LE, 1)
    m.add_constr(y, LE, 1)
    m.set_objective(x + y, "max")
    res = solve(m, SolverParams(backend=backend))
    assert res.objective == pytest.approx(2.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_contradictory_bounds_infeasible(backend):
    m = LinearModel()
    x = m.add_var("x")
    m.add_constr(x, LE, -1)
    m.set_objective(0 * x)
    assert solve(m, SolverParams(backend=backend)).status == INFEASIBLE


def test_bad_sense_and_duplicate_rows():
    m = LinearModel()
    x = m.add_var("x")
    with pytest.raises(ModelError):
        m.add_constr(x, "<", 1)
    m.add_constr(x, LE, 1, "cap")
    with pytest.raises(ModelError):
        m.add_constr(x, LE, 2, "cap")


def test_fix_binary():
    m = LinearModel()
    w = m.add_var("w", binary=True)
    f = fix_variables(m, {w: 1})
    assert f.lb[w.index] == f.ub[w.index] == 1.0
    assert m.ub[w.index] == 1.0 and m.lb[w.index] == 0.0


def test_fix_nothing_is_identity():
    m = LinearModel()
    x = m.add_var("x")
    m.add_constr(x, GE, 2)
    m.set_objective(x)
    f = fix_variables(m, {})
    assert np.array_equal(f.lb, m.lb) and np.array_equal(f.ub, m.ub)
    assert (f.matrix() != m.matrix()).nnz == 0


def test_fix_outside_bounds_rejected():
    m = LinearModel()
    w = m.add_var("w", binary=True)
    with pytest.raises(ModelError):
        fix_variables(m, {w: 2})


def _random_lp(seed, n=4, k=5):
    rng = np.random.default_rng(seed)
    m = LinearModel()
    xs = [m.add_var(f"x{j}") for j in range(n)]
    for r in range(k):
        a = rng.uniform(0.1, 2.0, n)
        m.add_constr(quicksum(a[j] * xs[j] for j in range(n)), GE, float(rng.uniform(1, 5)))
    m.add_constr(quicksum(xs), LE, 100.0)
    m.add_constr(xs[0] - xs[1], EQ, float(rng.uniform(-1, 1)))
    m.set_objective(quicksum(float(c) * x for c, x in zip(rng.uniform(0.5, 3, n), xs)))
    return m, xs


@pytest.mark.parametrize("backend", BACKENDS)
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_lp_strong_duality(backend, seed):
    m, _ = _random_lp(seed)
    res = solve(m, SolverParams(backend=backend))
    assert res.status == OPTIMAL
    assert m.dual_objective(res) == pytest.approx(res.objective, rel=1e-7, abs=1e-7)
    dual, _ = dualize(m)
    dres = solve(dual, SolverParams(backend=backend))
    assert dres.objective == pytest.approx(res.objective, rel=1e-7, abs=1e-7)


@pytest.mark.parametrize("backend", BACKENDS)
def test_max_model_dual_objective(backend):
    m = LinearModel()
    x = m.add_var("x")
    y = m.add_var("y")
    m.add_constr(x + 2 * y, LE, 4)
    m.add_constr(3 * x + y, LE, 6)
    m.set_objective(x + y, "max")
    res = solve(m, SolverParams(backend=backend))
    assert res.objective == pytest.approx(2.8)
    assert m.dual_objective(res) == pytest.approx(2.8)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), j=st.integers(0, 3), frac=st.floats(0.0, 1.0))
def test_restriction_monotonicity(seed, j, frac):
    m, xs = _random_lp(seed)
    base = solve(m)
    value = float(base.primal[xs[j].index]) + frac * 5.0
    fixed = solve(fix_variables(m, {xs[j]: value}))
    if fixed.ok:
        assert fixed.objective >= base.objective - 1e-7


def test_residuals_report_violation():
    m = LinearModel()
    x = m.add_var("x")
    m.add_constr(x, LE, 1)
    assert m.residuals(np.array([3.0]))[0] == pytest.approx(2.0)
    assert m.residuals(np.array([0.5]))[0] == pytest.approx(0.0)
