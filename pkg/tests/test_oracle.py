from dataclasses import replace

import numpy as np
import pytest
from _instances import nominal_plan, small_instance

from derplan.deterministic import solve_deterministic
from derplan.oracle import (
    autonomy_curve,
    brute_force_worst_case,
    concatenated_point,
    evaluate_plan,
    parse_levels,
    perfect_information_benchmark,
)
from derplan.synthetic import two_bus_case
from derplan.uncertainty import budgeted_set, nominal_point


def test_zero_budget_brute_force_is_nominal():
    case, bset = small_instance(1)
    bset = bset.with_budgets(0, 0)
    inv, w = nominal_plan(case, bset)
    real, value, ep = brute_force_worst_case(case, bset, inv, w)
    assert np.array_equal(real.pl, bset.pl_bar) and np.array_equal(real.pv, bset.pv_bar)
    assert value == pytest.approx(solve_deterministic(case, nominal_point(case, bset)).operational_cost, rel=1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_worst_case_raises_demand_and_lowers_pv(seed):
    case, bset = small_instance(600 + seed)
    inv, w = nominal_plan(case, bset)
    _, _, ep = brute_force_worst_case(case, bset, inv, w)
    assert ep.v_minus.sum() == 0 and ep.u_plus.sum() == 0


def test_concatenated_point_shape(toy5):
    pt = concatenated_point(toy5)
    assert pt.horizon == toy5.n_scen * toy5.horizon
    assert np.array_equal(pt.pl[toy5.horizon:2 * toy5.horizon], toy5.loads.pl[1])


def test_single_scenario_pi_is_deterministic():
    case = two_bus_case(horizon=3, pl=50.0, pv=[0.2, 1.0, 0.0], price=[0.3, 0.1, 0.4], allow_der=True)
    pi = perfect_information_benchmark(case)
    det = solve_deterministic(case)
    assert pi.objective == pytest.approx(det.objective, rel=1e-9)


def test_pi_below_realized_cost(toy5):
    pi = perfect_information_benchmark(toy5)
    det = solve_deterministic(toy5)
    realized = evaluate_plan(toy5, det.investments)
    assert realized.status == "optimal"
    assert pi.objective <= realized.objective + 1e-6
    assert realized.investment_cost == pytest.approx(det.investment_cost, rel=1e-9)


def test_unweighted_pi_counts_every_segment(toy5):
    w = perfect_information_benchmark(toy5, weighted=True)
    u = perfect_information_benchmark(toy5, weighted=False)
    assert u.objective >= w.objective - 1e-6


def test_autonomy_zero_is_unconstrained(toy5):
    pt = autonomy_curve(toy5, [0.0])[0]
    assert pt.feasible
    assert pt.objective == pytest.approx(perfect_information_benchmark(toy5).objective, rel=1e-9)


def _dark(cyclic):
    case = two_bus_case(horizon=2, pl=50.0, pv=[0.0, 0.0], allow_der=True)
    return replace(case, tech=replace(case.tech, cyclic_soc=cyclic))


def test_full_autonomy_without_sun_infeasible():
    pts = autonomy_curve(_dark(True), [0.0, 1.0])
    assert pts[0].feasible and not pts[1].feasible


def test_free_terminal_soc_lets_initial_charge_serve_load():
    pts = autonomy_curve(_dark(False), [1.0])
    assert pts[0].feasible and pts[0].pv_kw == 0.0 and pts[0].bess_kwh > 0


def test_autonomy_investment_monotone(toy5):
    pts = autonomy_curve(toy5, [0.0, 0.2, 0.4, 0.6])
    costs = [p.investment_cost for p in pts if p.feasible]
    assert len(costs) >= 2
    assert all(b >= a - 1e-6 for a, b in zip(costs, costs[1:]))


def test_autonomy_level_checked(toy5):
    with pytest.raises(ValueError):
        autonomy_curve(toy5, [1.5])


def test_parse_levels():
    assert parse_levels("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_levels("0, 0.5,1") == [0.0, 0.5, 1.0]
    with pytest.raises(ValueError):
        parse_levels("0:1:0")
