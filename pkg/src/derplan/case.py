"""Network, technology and cost data for a DER planning case."""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np


class CaseError(ValueError):
    """Raised when a case file cannot be parsed or a case is not well formed."""

    def __init__(self, message: str, violations: Sequence[str] = ()):
        super().__init__(message)
        self.violations = list(violations)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Bus:
    id: str
    pg_max: float = 0.0
    qg_min: float = 0.0
    qg_max: float = 0.0
    v_min: float = 0.81
    v_max: float = 1.21
    theta_min: float = -math.pi / 6
    theta_max: float = math.pi / 6
    pv_allowed: bool = True
    bess_allowed: bool = True


@dataclass(frozen=True)
class Line:
    from_bus: str
    to_bus: str
    r: float
    x: float
    s_max: float


@dataclass(frozen=True)
class Network:
    """Radial feeder.  ``r``/``x`` are per unit on ``s_base`` (same unit as power)."""

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    substation: str
    s_base: float = 1.0
    v_ref: float = 1.0

    @property
    def bus_ids(self) -> list[str]:
        return [b.id for b in self.buses]

    def index(self, bus_id: str) -> int:
        return self.bus_ids.index(bus_id)

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_line(self) -> int:
        return len(self.lines)

    def line_ends(self) -> list[tuple[int, int]]:
        pos = {b: k for k, b in enumerate(self.bus_ids)}
        return [(pos[l.from_bus], pos[l.to_bus]) for l in self.lines]


@dataclass(frozen=True)
class TechParams:
    soc_min: float = 0.1
    soc_max: float = 0.9
    soc_init: float = 0.5
    eff_charge: float = 0.95
    eff_discharge: float = 0.95
    pb: float = 50.0
    cap_min: float = 0.0
    cap_max: float = 500.0
    n_pv_max: int = 3
    n_bt_max: int = 3
    dt: float = 1.0
    # require every horizon to end with at least the initial stored energy
    cyclic_soc: bool = False


@dataclass(frozen=True)
class CostParams:
    """Per-bus capacity and fixed costs, per-unit operating costs, grid price per slot and scenario."""

    c_pv: np.ndarray
    c_bt: np.ndarray
    i_pv: np.ndarray
    i_bt: np.ndarray
    oc_pv: float
    oc_bt: float
    price: np.ndarray  # (S, T)


@dataclass(frozen=True)
class LoadProfile:
    pl: np.ndarray  # (S, T, B) kW
    ql: np.ndarray  # (S, T, B) kvar


@dataclass(frozen=True)
class PvProfile:
    pv: np.ndarray  # (S, T), fraction of installed capacity


@dataclass(frozen=True)
class PolygonCut:
    a: float
    b: float
    c: float


@dataclass(frozen=True)
class OperatingPoint:
    """Data of one operational horizon: PV availability, loads and prices."""

    pv: np.ndarray  # (T,)
    pl: np.ndarray  # (T, B)
    ql: np.ndarray  # (T, B)
    price: np.ndarray  # (T,)

    @property
    def horizon(self) -> int:
        return len(self.pv)

    def replace(self, **kw) -> "OperatingPoint":
        return replace(self, **{k: _frozen(v) for k, v in kw.items()})


@dataclass(frozen=True)
class UncertaintyConfig:
    """How the budgeted set's nominal values and deviations are built."""

    pv_method: str = "scenario_range"  # or "percentile"
    pv_history: np.ndarray | None = None  # (T, samples)
    p_low: float = 15.0
    p_high: float = 85.0
    pl_method: str = "scenario_range"


@dataclass(frozen=True)
class CaseData:
    network: Network
    tech: TechParams
    costs: CostParams
    loads: LoadProfile
    pv_profile: PvProfile
    probabilities: np.ndarray
    horizon: int
    name: str = "case"
    segments: int = 12
    uncertainty: UncertaintyConfig = field(default_factory=UncertaintyConfig)
    units: dict = field(default_factory=lambda: {"power": "kW", "energy": "kWh", "currency": "EUR"})

    @property
    def n_scen(self) -> int:
        return len(self.probabilities)

    def scenario_point(self, s: int) -> OperatingPoint:
        return OperatingPoint(
            self.pv_profile.pv[s], self.loads.pl[s], self.loads.ql[s], self.costs.price[s]
        )

    def expected_point(self) -> OperatingPoint:
        """Probability-weighted mean of all scenario data."""
        p = self.probabilities
        return OperatingPoint(
            _frozen(np.tensordot(p, self.pv_profile.pv, axes=1)),
            _frozen(np.tensordot(p, self.loads.pl, axes=1)),
            _frozen(np.tensordot(p, self.loads.ql, axes=1)),
            _frozen(np.tensordot(p, self.costs.price, axes=1)),
        )

    def with_scenarios(self, probabilities, pv, pl, ql, price) -> "CaseData":
        return replace(
            self,
            probabilities=_frozen(probabilities),
            pv_profile=PvProfile(_frozen(pv)),
            loads=LoadProfile(_frozen(pl), _frozen(ql)),
            costs=replace(self.costs, price=_frozen(price)),
        )

    def truncate(self, horizon: int) -> "CaseData":
        """Keep only the first ``horizon`` slots (used for small oracle checks)."""
        h = int(horizon)
        unc = self.uncertainty
        if unc.pv_history is not None:
            unc = replace(unc, pv_history=_frozen(unc.pv_history[:h]))
        out = self.with_scenarios(
            self.probabilities,
            self.pv_profile.pv[:, :h],
            self.loads.pl[:, :h],
            self.loads.ql[:, :h],
            self.costs.price[:, :h],
        )
        return replace(out, horizon=h, uncertainty=unc)


# ---------------------------------------------------------------------------


def polygon_coefficients(n_segments: int) -> list[PolygonCut]:
    """Outer regular-polygon cuts ``a*p + b*q + c*S <= 0`` approximating ``p^2+q^2 <= S^2``."""
    n = int(n_segments)
    if n < 4:
        raise ValueError(f"polygon needs at least 4 segments, got {n_segments}")
    cuts = []
    for r in range(n):
        ang = 2.0 * math.pi * r / n
        a, b = math.cos(ang), math.sin(ang)
        # snap round-off so the 4-gon is exactly axis aligned
        a = 0.0 if abs(a) < 1e-15 else a
        b = 0.0 if abs(b) < 1e-15 else b
        cuts.append(PolygonCut(a, b, -1.0))
    return cuts


def validate_case(case: CaseData) -> list[str]:
    """Return the list of problems found in ``case``; empty means well formed."""
    out: list[str] = []
    net = case.network
    ids = net.bus_ids
    idset = set(ids)
    if len(idset) != len(ids):
        out.append("duplicate bus identifiers")
    if net.substation not in idset:
        out.append(f"substation {net.substation!r} is not a bus")
    if net.s_base <= 0:
        out.append("s_base must be positive")

    for b in net.buses:
        if not b.v_min < b.v_max:
            out.append(f"bus {b.id}: voltage bounds inverted")
        if b.qg_min > b.qg_max:
            out.append(f"bus {b.id}: reactive bounds inverted")
        if b.theta_min > b.theta_max:
            out.append(f"bus {b.id}: angle bounds inverted")
        if b.pg_max < 0:
            out.append(f"bus {b.id}: negative pg_max")
    if net.substation in idset:
        sb = net.buses[ids.index(net.substation)]
        if not sb.v_min <= net.v_ref <= sb.v_max:
            out.append("substation voltage bounds exclude the reference voltage")
        if not sb.theta_min <= 0.0 <= sb.theta_max:
            out.append("substation angle bounds exclude zero")

    ends_ok = True
    for ln in net.lines:
        if ln.from_bus not in idset or ln.to_bus not in idset:
            out.append(f"line {ln.from_bus}-{ln.to_bus}: unknown endpoint")
            ends_ok = False
        if ln.from_bus == ln.to_bus:
            out.append(f"line {ln.from_bus}-{ln.to_bus}: self loop")
        if ln.r < 0 or ln.x < 0:
            out.append(f"line {ln.from_bus}-{ln.to_bus}: negative impedance")
        if not ln.s_max > 0:
            out.append(f"line {ln.from_bus}-{ln.to_bus}: s_max must be positive")
    if len(net.lines) != len(net.buses) - 1:
        out.append("not radial: a radial network needs exactly |buses|-1 lines")
    elif ends_ok and ids and not _connected(net):
        out.append("not radial: network is not connected")

    t = case.tech
    if not (0 <= t.soc_min < t.soc_max <= 1):
        out.append("soc bounds inverted" if t.soc_min >= t.soc_max else "soc bounds outside [0, 1]")
    if not t.soc_min <= t.soc_init <= t.soc_max:
        out.append("soc_init outside [soc_min, soc_max]")
    if not (0 < t.eff_charge <= 1 and 0 < t.eff_discharge <= 1):
        out.append("efficiencies must lie in (0, 1]")
    if t.cap_min > t.cap_max:
        out.append("installation capacity bounds inverted")
    if t.cap_min < 0:
        out.append("cap_min must be non-negative")
    if t.pb < 0 or t.dt <= 0:
        out.append("pb must be non-negative and dt positive")
    if t.n_pv_max < 0 or t.n_bt_max < 0:
        out.append("installation counts must be non-negative")

    B, T, S = net.n_bus, case.horizon, case.n_scen
    c = case.costs
    for name in ("c_pv", "c_bt", "i_pv", "i_bt"):
        arr = np.asarray(getattr(c, name))
        if arr.shape != (B,):
            out.append(f"costs.{name}: expected {B} values, got shape {arr.shape}")
        elif (arr < 0).any():
            out.append(f"costs.{name}: negative cost")
    if c.oc_pv < 0 or c.oc_bt < 0:
        out.append("operational costs must be non-negative")
    if c.price.shape != (S, T):
        out.append(f"price: expected shape {(S, T)}, got {c.price.shape}")
    elif (c.price < 0).any():
        out.append("price: negative value")

    p = case.probabilities
    if S < 1:
        out.append("at least one scenario is required")
    elif (p <= 0).any() or abs(p.sum() - 1.0) > 1e-9:
        out.append("scenario probabilities must be positive and sum to 1")
    if case.loads.pl.shape != (S, T, B) or case.loads.ql.shape != (S, T, B):
        out.append(f"loads: expected shape {(S, T, B)}")
    elif (case.loads.pl < 0).any():
        out.append("loads: negative active load")
    pv = case.pv_profile.pv
    if pv.shape != (S, T):
        out.append(f"pv: expected shape {(S, T)}, got {pv.shape}")
    elif (pv < 0).any() or (pv > 1).any():
        out.append("pv: profile outside [0, 1]")
    hist = case.uncertainty.pv_history
    if case.uncertainty.pv_method == "percentile":
        if hist is None or hist.ndim != 2 or hist.shape[0] != T or hist.shape[1] < 2:
            out.append("uncertainty.pv: percentile method needs a (slots x samples>=2) history")
    if case.segments < 4:
        out.append("segments must be >= 4")
    return out


def _connected(net: Network) -> bool:
    adj: dict[str, list[str]] = {b: [] for b in net.bus_ids}
    for ln in net.lines:
        adj[ln.from_bus].append(ln.to_bus)
        adj[ln.to_bus].append(ln.from_bus)
    start = net.bus_ids[0]
    seen = {start}
    todo = deque([start])
    while todo:
        u = todo.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                todo.append(v)
    return len(seen) == len(net.bus_ids)


def ensure_valid(case: CaseData) -> None:
    problems = validate_case(case)
    if problems:
        raise CaseError("invalid case: " + "; ".join(problems), problems)


# ---------------------------------------------------------------------------
# case files


def read_matrix_csv(path: str | Path) -> np.ndarray:
    """Read a numeric CSV (optional header row) into a 2-D array."""
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if k == 0:
                    continue  # header
                raise CaseError(f"{path}: non-numeric row {k + 1}")
    return np.array(rows, dtype=float)


def _matrix(spec: Any, base: Path) -> np.ndarray:
    if isinstance(spec, dict) and "csv" in spec:
        return read_matrix_csv(base / spec["csv"])
    return np.array(spec, dtype=float)


def _per_bus(value: Any, ids: list[str], what: str) -> np.ndarray:
    if isinstance(value, dict):
        default = float(value.get("default", 0.0))
        out = np.full(len(ids), default)
        for k, v in value.items():
            if k == "default":
                continue
            if k not in ids:
                raise CaseError(f"{what}: unknown bus {k!r}")
            out[ids.index(k)] = float(v)
        return out
    if isinstance(value, (list, tuple)):
        return np.array(value, dtype=float)
    return np.full(len(ids), float(value))


def load_case(path: str | Path) -> CaseData:
    """Parse a JSON case document (see README for the schema)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CaseError(f"cannot read case file {path}: {exc}") from exc
    return case_from_dict(doc, base=path.parent)


def case_from_dict(doc: dict, base: str | Path = ".") -> CaseData:
    base = Path(base)
    try:
        netd = doc["network"]
        defaults = netd.get("bus_defaults", {})
        buses = tuple(
            Bus(**{**defaults, **{k: v for k, v in b.items()}, "id": str(b["id"])}) for b in netd["buses"]
        )
        lines = tuple(
            Line(str(l["from"]), str(l["to"]), float(l["r"]), float(l["x"]), float(l["s_max"]))
            for l in netd["lines"]
        )
        net = Network(buses, lines, str(netd["substation"]), float(netd.get("s_base", 1.0)),
                      float(netd.get("v_ref", 1.0)))
        tech = TechParams(**doc.get("tech", {}))
        ids = net.bus_ids
        T = int(doc["horizon"])

        sc = doc["scenarios"]
        prob = np.array(sc["probabilities"], dtype=float)
        S = len(prob)
        pv = _matrix(sc["pv"], base)  # rows = slots, cols = scenarios
        if pv.ndim == 1:
            pv = pv[:, None]
        if pv.shape[1] == 1 and S > 1:
            pv = np.repeat(pv, S, axis=1)
        pv = pv.T
        pl_specs = sc["pl"]
        if not isinstance(pl_specs, list) or (pl_specs and not isinstance(pl_specs[0], (dict, list))):
            raise CaseError("scenarios.pl must be a list with one slots x buses matrix per scenario")
        if isinstance(pl_specs, list) and pl_specs and isinstance(pl_specs[0], list) and not isinstance(pl_specs[0][0], list):
            pl_specs = [pl_specs]
        pl = np.stack([_matrix(m, base) for m in pl_specs])
        if pl.shape[0] == 1 and S > 1:
            pl = np.repeat(pl, S, axis=0)
        if "ql" in sc:
            ql = np.stack([_matrix(m, base) for m in sc["ql"]])
            if ql.shape[0] == 1 and S > 1:
                ql = np.repeat(ql, S, axis=0)
        else:
            ql = pl * float(sc.get("ql_ratio", 0.0))

        cd = doc["costs"]
        price = _matrix(cd["price"], base)
        if price.ndim == 1:
            price = price[:, None]
        if price.shape[1] == 1 and S > 1:
            price = np.repeat(price, S, axis=1)
        costs = CostParams(
            c_pv=_frozen(_per_bus(cd.get("c_pv", 0.0), ids, "c_pv")),
            c_bt=_frozen(_per_bus(cd.get("c_bt", 0.0), ids, "c_bt")),
            i_pv=_frozen(_per_bus(cd.get("i_pv", 0.0), ids, "i_pv")),
            i_bt=_frozen(_per_bus(cd.get("i_bt", 0.0), ids, "i_bt")),
            oc_pv=float(cd.get("oc_pv", 0.0)),
            oc_bt=float(cd.get("oc_bt", 0.0)),
            price=_frozen(price.T),
        )

        ud = doc.get("uncertainty", {})
        pvd = ud.get("pv", {"method": "scenario_range"})
        hist = _frozen(_matrix(pvd["history"], base)) if "history" in pvd else None
        unc = UncertaintyConfig(
            pv_method=pvd.get("method", "scenario_range"),
            pv_history=hist,
            p_low=float(pvd.get("p_low", 15.0)),
            p_high=float(pvd.get("p_high", 85.0)),
            pl_method=ud.get("pl", {}).get("method", "scenario_range"),
        )
        if unc.pv_method not in ("percentile", "scenario_range") or unc.pl_method != "scenario_range":
            raise CaseError("unknown uncertainty construction method")
    except CaseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CaseError(f"malformed case document: {exc!r}") from exc

    return CaseData(
        network=net,
        tech=tech,
        costs=costs,
        loads=LoadProfile(_frozen(pl), _frozen(ql)),
        pv_profile=PvProfile(_frozen(pv)),
        probabilities=_frozen(prob),
        horizon=T,
        name=str(doc.get("name", "case")),
        segments=int(doc.get("segments", 12)),
        uncertainty=unc,
        units={"power": "kW", "energy": "kWh", "currency": "EUR", **doc.get("units", {})},
    )
