"""Plain, reproducible CSV/JSON reports (fixed float format, fixed ordering, no timings)."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .case import CaseData
from .deterministic import InvestmentValues

COLUMNS = [
    "case", "formulation", "beta_pl", "beta_pv", "status", "objective", "investment_cost", "operational_cost",
    "pv_capacity", "pv_buses", "bess_capacity", "bess_buses", "iterations", "currency", "power_unit", "energy_unit",
]


def fmt(x, digits: int = 6) -> str:
    if x is None or x == "":
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    s = f"{x:.{digits}f}"
    if float(s) == 0.0:
        s = f"{0.0:.{digits}f}"  # no negative zero
    return s


@dataclass
class ReportRow:
    case: str
    formulation: str
    beta_pl: int | str
    beta_pv: int | str
    status: str
    objective: float
    investment_cost: float
    operational_cost: float
    investments: InvestmentValues
    bus_ids: list
    iterations: int | str = ""
    units: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        inv = self.investments
        pv_buses = [b for b, v in zip(self.bus_ids, inv.gamma_pv) if v > 1e-9]
        bt_buses = [b for b, v in zip(self.bus_ids, inv.gamma_bt) if v > 1e-9]
        return {
            "case": self.case,
            "formulation": self.formulation,
            "beta_pl": self.beta_pl,
            "beta_pv": self.beta_pv,
            "status": self.status,
            "objective": fmt(self.objective),
            "investment_cost": fmt(self.investment_cost),
            "operational_cost": fmt(self.operational_cost),
            "pv_capacity": fmt(float(inv.gamma_pv.sum())),
            "pv_buses": " ".join(pv_buses),
            "bess_capacity": fmt(float(inv.gamma_bt.sum())),
            "bess_buses": " ".join(bt_buses),
            "iterations": self.iterations,
            "currency": self.units.get("currency", ""),
            "power_unit": self.units.get("power", ""),
            "energy_unit": self.units.get("energy", ""),
        }


def row_for(case: CaseData, formulation: str, sol, beta_pl="", beta_pv="") -> ReportRow:
    """Report row for a :class:`PlanSolution` or :class:`RobustSolution`."""
    iterations = getattr(sol, "iterations", "")
    return ReportRow(case.name, formulation, beta_pl, beta_pv, sol.status, sol.objective, sol.investment_cost,
                     sol.operational_cost, sol.investments, case.network.bus_ids, iterations, dict(case.units))


def to_csv(rows: list[ReportRow]) -> str:
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    wr.writeheader()
    for r in rows:
        wr.writerow(r.as_dict())
    return buf.getvalue()


def to_json(rows: list[ReportRow], extra: dict | None = None) -> str:
    doc = {"rows": [r.as_dict() for r in rows]}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def table_csv(header: list[str], records: list[list]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for rec in records:
        wr.writerow([fmt(v) for v in rec])
    return buf.getvalue()


def write(out_dir: str | Path, name: str, text: str) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def summary(rows: list[ReportRow]) -> str:
    """Aligned human-readable table."""
    heads = ["formulation", "beta_pl", "beta_pv", "status", "objective", "investment", "operational",
             "pv", "bess", "iters"]
    lines = []
    for r in rows:
        d = r.as_dict()
        lines.append([d["formulation"], str(d["beta_pl"]), str(d["beta_pv"]), d["status"],
                      fmt(r.objective, 3), fmt(r.investment_cost, 3), fmt(r.operational_cost, 3),
                      fmt(float(r.investments.gamma_pv.sum()), 1) + (f" @{d['pv_buses']}" if d["pv_buses"] else ""),
                      fmt(float(r.investments.gamma_bt.sum()), 1) + (f" @{d['bess_buses']}" if d["bess_buses"] else ""),
                      str(d["iterations"])])
    widths = [max(len(h), *(len(l[k]) for l in lines)) if lines else len(h) for k, h in enumerate(heads)]
    out = ["  ".join(h.ljust(w) for h, w in zip(heads, widths))]
    for l in lines:
        out.append("  ".join(c.ljust(w) for c, w in zip(l, widths)))
    return "\n".join(out)
