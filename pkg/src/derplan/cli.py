"""Command-line entry point: ``derplan <command> ...``.

Exit codes: 0 success, 2 invalid input, 3 solver failure (or oracle mismatch),
4 no convergence within the iteration limit.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import report
from .aro import CONVERGED, solve_aro, write_trace
from .arso import CUT_STYLES, solve_arso
from .baselines import SRO_RULES, solve_sro, solve_tsso
from .case import CaseData, CaseError, ensure_valid, load_case, validate_case
from .deterministic import SolveError, solve_deterministic
from .milp import BackendUnavailable, SolverParams
from .oracle import autonomy_curve, evaluate_plan, parse_levels, perfect_information_benchmark
from .uncertainty import CapacityError, budgeted_set, nominal_point, reduce_case

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_NONCONVERGED = 0, 2, 3, 4
FORMULATIONS = ("det", "tsso", "sro", "aro", "arso")

log = logging.getLogger("derplan")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="derplan", description="PV and battery siting/sizing under uncertainty")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, budgets=True):
        sp.add_argument("case", help="case JSON file")
        sp.add_argument("--scenarios", type=int, help="reduce the case to K scenarios first")
        sp.add_argument("--segments", type=int, help="line-capacity polygon segments")
        sp.add_argument("--horizon", type=int, help="keep only the first N slots")
        sp.add_argument("--tol", type=float, default=1e-6, help="relative Benders gap")
        sp.add_argument("--max-iter", type=int, default=200)
        sp.add_argument("--feas-tol", type=float, default=1e-6)
        sp.add_argument("--mip-gap", type=float, default=1e-6)
        sp.add_argument("--time-limit", type=float, help="seconds per solver call")
        sp.add_argument("--big-m", type=float, help="override the dual bound used in the linearisation")
        sp.add_argument("--cut-style", choices=CUT_STYLES, default="aggregated")
        sp.add_argument("--sro-rule", choices=SRO_RULES, default="box")
        sp.add_argument("--out", help="directory for JSON/CSV reports and traces")
        if budgets:
            sp.add_argument("--beta-pl", type=int, default=0, help="demand budget per bus")
            sp.add_argument("--beta-pv", type=int, default=0, help="PV budget")

    sp = sub.add_parser("validate", help="check a case file")
    sp.add_argument("case")

    sp = sub.add_parser("solve", help="solve one formulation")
    sp.add_argument("formulation", choices=FORMULATIONS)
    common(sp)

    sp = sub.add_parser("sweep", help="all formulations over several budgets")
    common(sp, budgets=False)
    sp.add_argument("--betas", default="0,10,20", help="comma-separated budgets (used for demand and PV)")
    sp.add_argument("--formulations", default=",".join(FORMULATIONS))

    sp = sub.add_parser("pi", help="perfect-information benchmark and realized cost of each plan")
    common(sp)
    sp.add_argument("--unweighted", action="store_true", help="do not weight segments by probability")

    sp = sub.add_parser("autonomy", help="cheapest plan per autonomy level")
    common(sp, budgets=False)
    sp.add_argument("--levels", default="0:1:0.1", help="start:stop:step or comma list")
    sp.add_argument("--unweighted", action="store_true")

    sp = sub.add_parser("oracle-check", help="cross-check dual subproblems and Benders against enumeration")
    common(sp, budgets=False)
    sp.add_argument("--check-horizon", type=int, default=3, help="slots kept for the enumeration checks")
    sp.add_argument("--beta", type=int, default=1)
    return p


def _params(a) -> SolverParams:
    return SolverParams(feas_tol=a.feas_tol, mip_gap=a.mip_gap, time_limit=a.time_limit)


def _prepare(a) -> CaseData:
    case = load_case(a.case)
    ensure_valid(case)
    if getattr(a, "segments", None):
        if a.segments < 4:
            raise CaseError("segments must be >= 4")
        case = dataclasses.replace(case, segments=a.segments)
    if getattr(a, "horizon", None):
        if not 1 <= a.horizon <= case.horizon:
            raise CaseError(f"horizon must lie in [1, {case.horizon}]")
        case = case.truncate(a.horizon)
    if getattr(a, "scenarios", None):
        if not 1 <= a.scenarios <= case.n_scen:
            raise CaseError(f"--scenarios must lie in [1, {case.n_scen}]")
        case = reduce_case(case, a.scenarios)
    return case


def _run_one(case: CaseData, form: str, bpl: int, bpv: int, a, params: SolverParams):
    """Returns (report row, solution)."""
    bset = budgeted_set(case, bpl, bpv)
    if form == "det":
        sol = solve_deterministic(case, nominal_point(case, bset), params)
        return report.row_for(case, "det", sol), sol
    if form == "tsso":
        sol = solve_tsso(case, params=params)
        return report.row_for(case, "tsso", sol), sol
    if form == "sro":
        sol = solve_sro(case, bset, a.sro_rule, params)
        return report.row_for(case, "sro", sol, bpl, bpv), sol
    if form == "aro":
        sol = solve_aro(case, bset, a.tol, a.max_iter, params, a.big_m)
        return report.row_for(case, "aro", sol, bpl, bpv), sol
    sol = solve_arso(case, bset, a.tol, a.max_iter, params, a.big_m, a.cut_style)
    return report.row_for(case, "arso", sol, bpl, ""), sol


def cmd_validate(a) -> int:
    case = load_case(a.case)
    problems = validate_case(case)
    if problems:
        for p in problems:
            print(f"invalid: {p}")
        return EXIT_INVALID
    print(f"{case.name}: {case.network.n_bus} buses, {case.network.n_line} lines, "
          f"{case.horizon} slots, {case.n_scen} scenarios: ok")
    return EXIT_OK


def cmd_solve(a) -> int:
    case = _prepare(a)
    params = _params(a)
    row, sol = _run_one(case, a.formulation, a.beta_pl, a.beta_pv, a, params)
    print(report.summary([row]))
    d = row.as_dict()
    cur = case.units.get("currency", "")
    print(f"objective {d['objective']} = investment {d['investment_cost']} + operational {d['operational_cost']} {cur}")
    if a.out:
        report.write(a.out, "report.csv", report.to_csv([row]))
        report.write(a.out, "report.json", report.to_json([row]))
        if hasattr(sol, "trace"):
            write_trace(Path(a.out) / f"trace_{a.formulation}.jsonl", sol.trace)
    if hasattr(sol, "status") and a.formulation in ("aro", "arso") and sol.status != CONVERGED:
        print(f"not converged: {sol.status} after {sol.iterations} iterations (gap {sol.gap:.6g})", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_sweep(a) -> int:
    case = _prepare(a)
    params = _params(a)
    try:
        betas = [int(b) for b in a.betas.split(",") if b.strip()]
    except ValueError:
        raise CaseError("--betas must be a comma-separated list of integers")
    forms = [f.strip() for f in a.formulations.split(",") if f.strip()]
    if any(f not in FORMULATIONS for f in forms):
        raise CaseError(f"unknown formulation in {a.formulations!r}")
    rows, code = [], EXIT_OK
    for f in ("det", "tsso"):
        if f in forms:
            rows.append(_run_one(case, f, 0, 0, a, params)[0])
    for beta in betas:
        for f in ("sro", "aro", "arso"):
            if f not in forms:
                continue
            row, sol = _run_one(case, f, beta, beta, a, params)
            rows.append(row)
            if a.out and hasattr(sol, "trace"):
                write_trace(Path(a.out) / f"trace_{f}_beta{beta}.jsonl", sol.trace)
            if f in ("aro", "arso") and sol.status != CONVERGED:
                code = EXIT_NONCONVERGED
    print(report.summary(rows))
    if a.out:
        report.write(a.out, "sweep.csv", report.to_csv(rows))
        report.write(a.out, "sweep.json", report.to_json(rows))
    return code


def cmd_pi(a) -> int:
    case = _prepare(a)
    params = _params(a)
    weighted = not a.unweighted
    pi = perfect_information_benchmark(case, weighted, params)
    if pi.status != "optimal":
        raise SolveError("perfect-information model not solved", pi.status)
    records = [["pi", pi.objective, pi.investment_cost, pi.operational_cost,
                float(pi.investments.gamma_pv.sum()), float(pi.investments.gamma_bt.sum()), pi.autonomy]]
    for form in FORMULATIONS:
        _, sol = _run_one(case, form, a.beta_pl, a.beta_pv, a, params)
        ev = evaluate_plan(case, sol.investments, weighted, params)
        records.append([form, ev.objective, ev.investment_cost, ev.operational_cost,
                        float(sol.investments.gamma_pv.sum()), float(sol.investments.gamma_bt.sum()), ev.autonomy])
    header = ["plan", "realized_cost", "investment_cost", "operational_cost", "pv_capacity", "bess_capacity",
              "autonomy"]
    text = report.table_csv(header, records)
    print(text, end="")
    if a.out:
        report.write(a.out, "pi.csv", text)
    return EXIT_OK


def cmd_autonomy(a) -> int:
    case = _prepare(a)
    levels = parse_levels(a.levels)
    pts = autonomy_curve(case, levels, not a.unweighted, _params(a))
    header = ["autonomy", "feasible", "investment_cost", "objective", "pv_capacity", "bess_capacity"]
    text = report.table_csv(header, [[p.level, p.feasible, p.investment_cost, p.objective, p.pv_kw, p.bess_kwh]
                                     for p in pts])
    print(text, end="")
    if a.out:
        report.write(a.out, "autonomy.csv", text)
    return EXIT_OK


def cmd_oracle_check(a) -> int:
    from .arso import build_arso_dsp
    from .aro import build_dsp, solve_dsp
    from .oracle import (brute_force_worst_case, brute_force_worst_case_arso, solve_aro_enumerated,
                         solve_arso_enumerated)

    case = _prepare(a)
    if a.check_horizon < case.horizon:
        case = case.truncate(a.check_horizon)
    params = _params(a)
    bset = budgeted_set(case, a.beta, a.beta)
    det = solve_deterministic(case, nominal_point(case, bset), params)
    inv, w = det.investments, det.operations[0].w
    ws = np.stack([w] * case.n_scen)
    checks = []

    def close(x, y):
        return abs(x - y) <= 1e-6 * (1 + abs(y))

    d = solve_dsp(build_dsp(case, bset, inv, w, a.big_m), bset, params)
    _, bf, _ = brute_force_worst_case(case, bset, inv, w, params=params)
    checks.append(("aro dual subproblem vs enumeration", d.value, bf))
    d2 = solve_dsp(build_arso_dsp(case, bset, inv, ws, a.big_m), bset.demand_only(), params)
    _, bf2, _ = brute_force_worst_case_arso(case, bset, inv, ws, params=params)
    checks.append(("arso dual subproblem vs enumeration", d2.value, bf2))
    aro = solve_aro(case, bset, a.tol, a.max_iter, params, a.big_m)
    checks.append(("aro benders vs enumerated plan", aro.objective, solve_aro_enumerated(case, bset, params=params).objective))
    arso = solve_arso(case, bset, a.tol, a.max_iter, params, a.big_m, a.cut_style)
    checks.append(("arso benders vs enumerated plan", arso.objective,
                   solve_arso_enumerated(case, bset, params=params).objective))
    ok = True
    for name, x, y in checks:
        good = close(x, y)
        ok &= good
        print(f"{'PASS' if good else 'FAIL'}  {name}: {report.fmt(x)} vs {report.fmt(y)}")
    return EXIT_OK if ok else EXIT_SOLVER


COMMANDS = {"validate": cmd_validate, "solve": cmd_solve, "sweep": cmd_sweep, "pi": cmd_pi,
            "autonomy": cmd_autonomy, "oracle-check": cmd_oracle_check}


def run(argv=None) -> int:
    a = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[a.command](a)
    except (CaseError, CapacityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SolveError, BackendUnavailable) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
