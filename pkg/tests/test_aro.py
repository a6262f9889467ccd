import numpy as np
import pytest
from _instances import nominal_plan, small_instance

from derplan.aro import build_dsp, build_master, build_subproblem, solve_aro, solve_dsp
from derplan.baselines import solve_sro
from derplan.deterministic import InvestmentValues, solve_deterministic
from derplan.milp import ModelError, fix_variables, solve
from derplan.oracle import brute_force_worst_case, solve_aro_enumerated
from derplan.uncertainty import (
    Realization,
    apply_realization,
    budgeted_set,
    count_extreme_points,
    enumerate_extreme_points,
    nominal_point,
    realize,
)


def _pattern_assignment(dsp, ep):
    fix = {}
    for ix, val in ((dsp.u_plus, ep.u_plus), (dsp.u_minus, ep.u_minus), (dsp.v_plus, ep.v_plus),
                    (dsp.v_minus, ep.v_minus)):
        for i, v in zip(np.ravel(ix), np.ravel(val)):
            if i >= 0:
                fix[int(i)] = float(v)
    return fix


def _primal_value(case, bset, inv, w, real):
    sub = build_subproblem(case, apply_realization(nominal_point(case, bset), real), inv, w)
    res = solve(sub.model)
    assert res.ok
    return res.objective


@pytest.fixture(scope="module")
def toy5_nominal(toy5):
    bs = budgeted_set(toy5, 0, 0)
    return bs, solve_deterministic(toy5, nominal_point(toy5, bs))


def test_zero_budget_collapses_to_nominal(toy5, toy5_nominal):
    bs, det = toy5_nominal
    sol = solve_aro(toy5, bs)
    assert sol.converged and sol.iterations <= 2
    assert sol.objective == pytest.approx(det.objective, rel=1e-6)


def test_single_block_master_is_deterministic(toy5, toy5_nominal):
    bs, det = toy5_nominal
    res = solve(build_master(toy5, [nominal_point(toy5, bs)]).model)
    assert res.objective == pytest.approx(det.objective, rel=1e-6)


def test_master_monotone_and_duplicate_invariant():
    case, bset = small_instance(3)
    bset = bset.with_budgets(1, 1)
    base = nominal_point(case, bset)
    pts = [apply_realization(base, realize(bset, ep)) for ep in enumerate_extreme_points(bset)][:4]
    prev = -np.inf
    for r in range(1, len(pts) + 1):
        obj = solve(build_master(case, pts[:r]).model).objective
        assert obj >= prev - 1e-7
        prev = obj
    dup = solve(build_master(case, pts[:1] + pts[:1]).model).objective
    assert dup == pytest.approx(solve(build_master(case, pts[:1]).model).objective, rel=1e-9)


def test_master_needs_a_realization(toy5):
    with pytest.raises(ModelError):
        build_master(toy5, [])


def test_zero_budget_dsp_equals_primal(toy5, toy5_nominal):
    bs, det = toy5_nominal
    inv, w = det.investments, det.operations[0].w
    dres = solve_dsp(build_dsp(toy5, bs, inv, w), bs)
    assert dres.value == pytest.approx(_primal_value(toy5, bs, inv, w, Realization(bs.pv_bar, bs.pl_bar)), rel=1e-6)
    assert dres.value == pytest.approx(det.operational_cost, rel=1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_fixed_pattern_strong_duality(seed):
    case, bset = small_instance(seed)
    bset = bset.with_budgets(min(1, case.horizon), min(1, case.horizon))
    inv, w = nominal_plan(case, bset)
    dsp = build_dsp(case, bset, inv, w)
    for ep in list(enumerate_extreme_points(bset))[:10]:
        res = solve(fix_variables(dsp.model, _pattern_assignment(dsp, ep)))
        assert res.ok
        want = _primal_value(case, bset, inv, w, realize(bset, ep))
        assert res.objective == pytest.approx(want, rel=1e-6, abs=1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_dsp_matches_brute_force(seed):
    case, bset = small_instance(100 + seed)
    inv, w = nominal_plan(case, bset)
    dres = solve_dsp(build_dsp(case, bset, inv, w), bset)
    _, value, _ = brute_force_worst_case(case, bset, inv, w)
    assert abs(dres.value - value) <= 1e-6 * (1 + abs(value))
    assert dres.bigm_residual <= 1e-6


def test_dsp_without_investment(toy5):
    small = toy5.truncate(2)
    bs = budgeted_set(small, 1, 1)
    inv = InvestmentValues.zeros(small.network.n_bus)
    w = np.zeros((2, small.network.n_bus))
    dres = solve_dsp(build_dsp(small, bs, inv, w), bs)
    _, value, _ = brute_force_worst_case(small, bs, inv, w)
    assert dres.value == pytest.approx(value, rel=1e-6)
    # without DER, higher demand is always worse: the optimum raises loads only
    assert dres.extreme_point.v_minus.sum() == 0


@pytest.mark.parametrize("seed", range(4))
def test_benders_matches_enumeration(seed):
    case, bset = small_instance(200 + seed, max_points=150)
    sol = solve_aro(case, bset)
    ref = solve_aro_enumerated(case, bset)
    assert sol.converged
    assert sol.objective == pytest.approx(ref.objective, rel=1e-6, abs=1e-6)
    assert sol.iterations <= count_extreme_points(bset)
    lbs = [r["lb"] for r in sol.trace]
    assert all(b >= a - 1e-9 for a, b in zip(lbs, lbs[1:]))
    assert all(r["ub"] >= r["lb"] - 1e-6 * (1 + abs(r["ub"])) for r in sol.trace)


def test_objective_monotone_in_budget():
    case, bset = small_instance(7, max_points=10_000)
    T = case.horizon
    objs = [solve_aro(case, bset.with_budgets(b, b)).objective for b in range(min(T, 2) + 1)]
    assert all(b >= a - 1e-6 for a, b in zip(objs, objs[1:]))


@pytest.mark.parametrize("seed", range(3))
def test_adaptivity_ordering(seed):
    case, bset = small_instance(300 + seed)
    det = solve_deterministic(case, nominal_point(case, bset)).objective
    aro = solve_aro(case, bset).objective
    sro = solve_sro(case, bset).objective
    assert det <= aro + 1e-6 <= sro + 2e-6


def test_bad_tolerance(toy5):
    with pytest.raises(ValueError):
        solve_aro(toy5, budgeted_set(toy5), tol=0.0)


def test_plan_shape_checked(toy5):
    bs = budgeted_set(toy5)
    with pytest.raises(ModelError):
        build_dsp(toy5, bs, InvestmentValues.zeros(2), np.zeros((24, 2)))


def test_cyclic_storage_dsp_matches_brute_force():
    from dataclasses import replace

    case, bset = small_instance(105)
    case = replace(case, tech=replace(case.tech, cyclic_soc=True))
    inv, w = nominal_plan(case, bset)
    dres = solve_dsp(build_dsp(case, bset, inv, w), bset)
    _, value, _ = brute_force_worst_case(case, bset, inv, w)
    assert abs(dres.value - value) <= 1e-6 * (1 + abs(value))
