from dataclasses import replace

import numpy as np
import pytest

from derplan.deterministic import (
    InvestmentValues,
    build_deterministic,
    check_feasibility,
    investment_cost,
    operational_cost,
    solve_deterministic,
)
from derplan.milp import fix_variables, solve
from derplan.synthetic import two_bus_case


def test_zero_demand_zero_price():
    case = two_bus_case(horizon=2, pl=0.0, price=0.0, allow_der=True)
    sol = solve_deterministic(case)
    assert sol.objective == pytest.approx(0.0, abs=1e-9)
    assert sol.investments.gamma_pv.sum() == 0 and sol.investments.gamma_bt.sum() == 0


def test_two_bus_grid_import():
    case = two_bus_case(horizon=1, pl=100.0, price=0.2)
    sol = solve_deterministic(case)
    assert sol.operations[0].pg[0, 0] == pytest.approx(100.0)
    assert sol.objective == pytest.approx(20.0)


def test_two_bus_pv_sized_for_sunny_slot():
    case = two_bus_case(horizon=2, pl=100.0, pv=[1.0, 0.0], price=1.0, allow_der=True, c_pv=0.05)
    costs = replace(case.costs, c_bt=np.full(2, 10.0))
    case = replace(case, costs=costs)
    sol = solve_deterministic(case)
    # hand solution: 100 kW of PV covers slot 1, slot 2 is imported
    assert sol.investments.gamma_pv[1] == pytest.approx(100.0)
    assert sol.investments.gamma_bt.sum() == pytest.approx(0.0)
    assert sol.objective == pytest.approx(0.05 * 100 + 1.0 * 100)


def test_investment_cost_examples(toy5):
    B = toy5.network.n_bus
    assert investment_cost(toy5, InvestmentValues.zeros(B)) == 0.0
    costs = replace(toy5.costs, c_pv=np.full(B, 5.0), i_pv=np.full(B, 100.0))
    inv = InvestmentValues.zeros(B)
    inv.gamma_pv[1], inv.nu_pv[1] = 10.0, 1.0
    assert investment_cost(replace(toy5, costs=costs), inv) == pytest.approx(150.0)


def test_operational_cost_examples():
    case = two_bus_case(horizon=2, pl=100.0, price=0.2)
    sol = solve_deterministic(case)
    op = sol.operations[0]
    zero = replace(op, pg=np.zeros_like(op.pg), pv=np.zeros_like(op.pv), ds=np.zeros_like(op.ds))
    point = case.expected_point()
    assert operational_cost(case, zero, point) == 0.0
    one = zero.pg.copy()
    one[0, 0] = 100.0
    assert operational_cost(case, replace(zero, pg=one), point) == pytest.approx(20.0)


def test_cost_split_matches_objective(toy5):
    sol = solve_deterministic(toy5)
    assert sol.investment_cost + sol.operational_cost == pytest.approx(sol.objective, rel=1e-9)
    assert sol.investments.gamma_pv.sum() > 0


def test_solution_feasible_and_exclusive(toy5):
    sol = solve_deterministic(toy5)
    op = sol.operations[0]
    rep = check_feasibility(toy5, sol.investments, op, toy5.expected_point())
    assert rep["feasible"], rep["violated"]
    assert max(rep["residuals"].values()) <= 1e-6
    assert np.minimum(op.ch, op.ds).max() <= 1e-6


def test_perturbed_grid_import_flags_active_balance(toy5):
    sol = solve_deterministic(toy5)
    op = sol.operations[0]
    pg = op.pg.copy()
    pg[5, 0] += 1.0
    rep = check_feasibility(toy5, sol.investments, replace(op, pg=pg), toy5.expected_point())
    assert rep["residuals"]["active_balance"] == pytest.approx(1.0, abs=1e-6)
    assert rep["violated"] == ["active_balance"]


def test_perturbed_reactive_flags_only_reactive_balance(toy5):
    sol = solve_deterministic(toy5)
    op = sol.operations[0]
    qg = op.qg.copy()
    qg[3, 0] += 2.0
    rep = check_feasibility(toy5, sol.investments, replace(op, qg=qg), toy5.expected_point())
    assert rep["violated"] == ["reactive_balance"]
    assert rep["residuals"]["reactive_balance"] == pytest.approx(2.0, abs=1e-6)


def test_charging_while_discharge_mode_flags_exact_families(toy5):
    sol = solve_deterministic(toy5)
    op = sol.operations[0]
    k = int(np.argmax(sol.investments.gamma_bt))
    assert sol.investments.gamma_bt[k] > 0
    t = int(np.argmin(op.w[:, k]))
    ch = op.ch.copy()
    ch[t, k] += 1.0
    rep = check_feasibility(toy5, sol.investments, replace(op, ch=ch), toy5.expected_point())
    # extra charge breaks the bus balance, the storage dynamics and the w-gated charge limit
    assert sorted(rep["violated"]) == ["active_balance", "charge_limit", "soc_dynamics"]


def test_fixing_pv_never_improves(toy5):
    dm = build_deterministic(toy5, toy5.expected_point())
    base = solve(dm.model)
    k = 2
    fixed = fix_variables(dm.model, {dm.inv.gamma_pv[k]: 50.0, dm.inv.nu_pv[k]: 1.0})
    res = solve(fixed)
    assert res.ok and res.objective >= base.objective - 1e-7


def test_higher_prices_never_cheaper(toy5):
    point = toy5.expected_point()
    lo = solve_deterministic(toy5, point).objective
    hi = solve_deterministic(toy5, point.replace(price=point.price * 1.5)).objective
    assert hi >= lo - 1e-7


def test_dimension_mismatch_rejected(toy5):
    from derplan.milp import ModelError

    pt = toy5.expected_point()
    with pytest.raises(ModelError):
        build_deterministic(toy5, pt.replace(pl=pt.pl[:, :2]))


def test_cyclic_soc_restores_initial_energy(toy5):
    case = replace(toy5, tech=replace(toy5.tech, cyclic_soc=True))
    sol = solve_deterministic(case)
    op = sol.operations[0]
    init = case.tech.soc_init * sol.investments.gamma_bt
    assert (op.soc[-1] >= init - 1e-6).all()
    rep = check_feasibility(case, sol.investments, op, case.expected_point())
    assert rep["feasible"], rep["violated"]
    assert sol.objective >= solve_deterministic(toy5).objective - 1e-6
    soc = op.soc.copy()
    soc[-1] = 0.0
    assert "terminal_soc" in check_feasibility(case, sol.investments, replace(op, soc=soc),
                                               case.expected_point())["violated"]
