from dataclasses import replace

import numpy as np
import pytest

from derplan.baselines import sro_point, solve_sro, solve_tsso, with_nominal_demand
from derplan.deterministic import solve_deterministic
from derplan.synthetic import two_bus_case
from derplan.uncertainty import budgeted_set, nominal_point


def _stack(case, reps):
    return case.with_scenarios(np.full(reps, 1.0 / reps), np.repeat(case.pv_profile.pv, reps, axis=0),
                               np.repeat(case.loads.pl, reps, axis=0), np.repeat(case.loads.ql, reps, axis=0),
                               np.repeat(case.costs.price, reps, axis=0))


@pytest.fixture(scope="module")
def sunny():
    case = two_bus_case(horizon=2, pl=100.0, pv=[1.0, 0.3], price=1.0, allow_der=True, c_pv=0.2)
    # storage priced out so that only PV separates the scenarios
    return replace(case, costs=replace(case.costs, c_bt=np.full(2, 50.0)))


def test_single_scenario_equals_deterministic(sunny):
    tsso = solve_tsso(sunny)
    det = solve_deterministic(sunny, sunny.scenario_point(0))
    assert tsso.objective == pytest.approx(det.objective, rel=1e-9)


def test_duplicate_scenarios_invariant(sunny):
    one = solve_tsso(sunny).objective
    two = solve_tsso(_stack(sunny, 2)).objective
    assert two == pytest.approx(one, rel=1e-9)


def test_pv_in_one_scenario_only(sunny):
    dark = np.zeros_like(sunny.pv_profile.pv)
    case = sunny.with_scenarios([0.5, 0.5], np.concatenate([sunny.pv_profile.pv, dark]),
                                np.repeat(sunny.loads.pl, 2, axis=0), np.repeat(sunny.loads.ql, 2, axis=0),
                                np.repeat(sunny.costs.price, 2, axis=0))
    tsso = solve_tsso(case)
    lit = solve_deterministic(case, case.scenario_point(0)).operational_cost
    unlit = solve_deterministic(case, case.scenario_point(1)).operational_cost
    assert lit + 1e-6 < tsso.operational_cost < unlit - 1e-6
    costs = tsso.extra["scenario_costs"]
    assert tsso.operational_cost == pytest.approx(0.5 * costs[0] + 0.5 * costs[1])


def test_tsso_exclusive_and_split(toy5):
    sol = solve_tsso(toy5)
    assert sol.investment_cost + sol.operational_cost == pytest.approx(sol.objective, rel=1e-9)
    for op in sol.operations:
        assert np.minimum(op.ch, op.ds).max() <= 1e-6


def test_tsso_lower_than_worst_single_plan(toy5):
    det = [solve_deterministic(toy5, toy5.scenario_point(s)).objective for s in range(toy5.n_scen)]
    tsso = solve_tsso(toy5).objective
    assert min(det) - 1e-6 <= tsso


def test_sro_zero_budget_is_nominal(toy5):
    bs = budgeted_set(toy5, 0, 0)
    sro = solve_sro(toy5, bs)
    det = solve_deterministic(toy5, nominal_point(toy5, bs))
    assert sro.objective == pytest.approx(det.objective, rel=1e-9)


@pytest.mark.parametrize("rule", ["box", "budgeted"])
def test_sro_point_inside_box(toy5, rule):
    bs = budgeted_set(toy5, 3, 3)
    pt = sro_point(toy5, bs, rule)
    assert (pt.pl <= bs.pl_bar + bs.pl_hat + 1e-12).all() and (pt.pl >= bs.pl_bar - 1e-12).all()
    assert (pt.pv >= bs.pv_bar - bs.pv_hat - 1e-12).all() and (pt.pv <= bs.pv_bar + 1e-12).all()
    if rule == "budgeted":
        raised = (pt.pl > bs.pl_bar + 1e-12).sum(axis=0)
        assert (raised <= 3).all()
        assert ((pt.pv < bs.pv_bar - 1e-12).sum()) <= 3


def test_sro_rule_checked(toy5):
    with pytest.raises(ValueError):
        sro_point(toy5, budgeted_set(toy5, 1, 1), "median")


def test_nominal_demand_scenarios(toy5):
    bs = budgeted_set(toy5, 0, 0)
    ss = with_nominal_demand(toy5, bs)
    assert all(np.array_equal(ss.pl[s], bs.pl_bar) for s in range(ss.size))
