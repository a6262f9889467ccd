"""Budgeted uncertainty sets, discrete scenario sets and scenario reduction."""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .case import CaseData, OperatingPoint, _frozen

DEFAULT_ENUM_LIMIT = 200_000


class CapacityError(RuntimeError):
    """Raised when an enumeration would exceed its limit."""

    def __init__(self, count: int, limit: int):
        super().__init__(f"{count} extreme points exceed the enumeration limit {limit}")
        self.count = count
        self.limit = limit


@dataclass(frozen=True)
class BudgetedSet:
    """Box of half-width ``hat`` around ``bar`` with integer budgets on simultaneous deviations.

    ``beta_pl`` applies to each bus separately, ``beta_pv`` to the single PV series.
    """

    pv_bar: np.ndarray  # (T,)
    pv_hat: np.ndarray  # (T,)
    pl_bar: np.ndarray  # (T, B)
    pl_hat: np.ndarray  # (T, B)
    beta_pv: int = 0
    beta_pl: int = 0

    def __post_init__(self):
        T = len(self.pv_bar)
        for name in ("beta_pv", "beta_pl"):
            b = getattr(self, name)
            if isinstance(b, float) and not b.is_integer():
                raise ValueError(f"{name} must be an integer, got {b}")
            b = int(b)
            if not 0 <= b <= T:
                raise ValueError(f"{name} must lie in [0, {T}], got {b}")
            object.__setattr__(self, name, b)
        for name in ("pv_bar", "pv_hat", "pl_bar", "pl_hat"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if (self.pv_hat < 0).any() or (self.pl_hat < 0).any():
            raise ValueError("deviations must be non-negative")
        if self.pl_bar.shape != self.pl_hat.shape or self.pv_bar.shape != self.pv_hat.shape:
            raise ValueError("nominal values and deviations must have matching shapes")

    @property
    def horizon(self) -> int:
        return len(self.pv_bar)

    def with_budgets(self, beta_pl: int | None = None, beta_pv: int | None = None) -> "BudgetedSet":
        return BudgetedSet(self.pv_bar, self.pv_hat, self.pl_bar, self.pl_hat,
                           self.beta_pv if beta_pv is None else beta_pv,
                           self.beta_pl if beta_pl is None else beta_pl)

    def demand_only(self) -> "BudgetedSet":
        """Same demand part; PV fixed at nominal."""
        return BudgetedSet(self.pv_bar, np.zeros_like(self.pv_hat), self.pl_bar, self.pl_hat, 0, self.beta_pl)


@dataclass(frozen=True)
class Realization:
    pv: np.ndarray  # (T,)
    pl: np.ndarray  # (T, B)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.round(self.pv, 9).tobytes())
        h.update(np.round(self.pl, 9).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class ExtremePoint:
    """Deviation pattern: +1/-1/0 per PV slot (``u``) and per (slot, bus) load entry (``v``)."""

    u_plus: np.ndarray  # (T,)
    u_minus: np.ndarray  # (T,)
    v_plus: np.ndarray  # (T, B)
    v_minus: np.ndarray  # (T, B)

    @classmethod
    def nominal(cls, horizon: int, n_bus: int) -> "ExtremePoint":
        z = np.zeros(horizon, dtype=int)
        zz = np.zeros((horizon, n_bus), dtype=int)
        return cls(z, z.copy(), zz, zz.copy())

    def key(self) -> tuple:
        """Binary pattern used for lexicographic tie-breaking."""
        return tuple(np.concatenate([self.u_plus, self.u_minus, self.v_plus.ravel(), self.v_minus.ravel()]).astype(int))

    def digest(self) -> str:
        return hashlib.sha256(bytes(self.key())).hexdigest()[:16]


@dataclass(frozen=True)
class ScenarioSet:
    probabilities: np.ndarray  # (S,)
    pv: np.ndarray  # (S, T)
    pl: np.ndarray  # (S, T, B)
    ql: np.ndarray | None = None
    price: np.ndarray | None = None
    indices: tuple = ()

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.size == 0:
            raise ValueError("a scenario set needs at least one scenario")
        if (p <= 0).any() or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("scenario probabilities must be positive and sum to 1")

    @property
    def size(self) -> int:
        return len(self.probabilities)


# ---------------------------------------------------------------------------
# set construction


def envelope_from_history(history, p_low: float = 15.0, p_high: float = 85.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-slot mean and deviation from a (slots x samples) history.

    The deviation is the larger distance from the mean to the two percentiles
    (linear interpolation between order statistics), floored at zero.
    """
    h = np.asarray(history, dtype=float)
    if h.ndim != 2 or h.shape[0] == 0 or h.shape[1] < 2:
        raise ValueError("history must be a (slots x samples) matrix with at least two samples")
    if not 0 <= p_low < p_high <= 100:
        raise ValueError("percentiles must satisfy 0 <= p_low < p_high <= 100")
    bar = h.mean(axis=1)
    lo = np.percentile(h, p_low, axis=1, method="linear")
    hi = np.percentile(h, p_high, axis=1, method="linear")
    hat = np.maximum(np.maximum(hi - bar, bar - lo), 0.0)
    return bar, hat


def envelope_from_scenarios(values, probabilities) -> tuple[np.ndarray, np.ndarray]:
    """Probability-weighted mean and the larger distance to the scenario maximum / minimum."""
    v = np.asarray(values, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    bar = np.tensordot(p, v, axes=1)
    hat = np.maximum(np.maximum(v.max(axis=0) - bar, bar - v.min(axis=0)), 0.0)
    return bar, hat


def budgeted_set(case: CaseData, beta_pl: int = 0, beta_pv: int = 0) -> BudgetedSet:
    """Budgeted set of ``case``; nominal values and deviations per the case's construction methods."""
    unc = case.uncertainty
    if unc.pv_method == "percentile":
        pv_bar, pv_hat = envelope_from_history(unc.pv_history, unc.p_low, unc.p_high)
    else:
        pv_bar, pv_hat = envelope_from_scenarios(case.pv_profile.pv, case.probabilities)
    pl_bar, pl_hat = envelope_from_scenarios(case.loads.pl, case.probabilities)
    # keep realizations physical: PV within [0, 1], loads non-negative
    pv_bar = np.clip(pv_bar, 0.0, 1.0)
    pv_hat = np.minimum(pv_hat, np.minimum(pv_bar, 1.0 - pv_bar))
    pl_hat = np.minimum(pl_hat, pl_bar)
    return BudgetedSet(pv_bar, pv_hat, pl_bar, pl_hat, beta_pv, beta_pl)


def nominal_point(case: CaseData, bset: BudgetedSet) -> OperatingPoint:
    """Operating point at the set's nominal values (reactive load and price at their expectation)."""
    exp = case.expected_point()
    return OperatingPoint(_frozen(bset.pv_bar), _frozen(bset.pl_bar), exp.ql, exp.price)


def apply_realization(point: OperatingPoint, real: Realization) -> OperatingPoint:
    return point.replace(pv=real.pv, pl=real.pl)


# ---------------------------------------------------------------------------
# extreme points


def check_extreme_point(bset: BudgetedSet, ep: ExtremePoint) -> list[str]:
    out = []
    arrays = (ep.u_plus, ep.u_minus, ep.v_plus, ep.v_minus)
    if any(((a != 0) & (a != 1)).any() for a in arrays):
        out.append("pattern entries must be binary")
    if ((ep.u_plus + ep.u_minus) > 1).any():
        out.append("PV slot deviates up and down at once")
    if ((ep.v_plus + ep.v_minus) > 1).any():
        out.append("load entry deviates up and down at once")
    if (ep.u_plus + ep.u_minus).sum() > bset.beta_pv:
        out.append("PV budget exceeded")
    if ((ep.v_plus + ep.v_minus).sum(axis=0) > bset.beta_pl).any():
        out.append("load budget exceeded")
    return out


def realize(bset: BudgetedSet, ep: ExtremePoint) -> Realization:
    """Realization selected by an extreme-point pattern."""
    problems = check_extreme_point(bset, ep)
    if problems:
        raise ValueError("invalid extreme point: " + "; ".join(problems))
    pv = bset.pv_bar + bset.pv_hat * (ep.u_plus - ep.u_minus)
    pl = bset.pl_bar + bset.pl_hat * (ep.v_plus - ep.v_minus)
    return Realization(_frozen(pv), _frozen(pl))


def contains(bset: BudgetedSet, real: Realization, tol: float = 1e-9) -> bool:
    """Membership test for the budgeted set (zero-deviation entries must sit at nominal)."""

    def scaled(x, bar, hat):
        d = np.abs(np.asarray(x) - bar)
        if (d > hat + tol).any():
            return None
        return np.where(hat > 0, d / np.where(hat > 0, hat, 1.0), 0.0)

    zpv = scaled(real.pv, bset.pv_bar, bset.pv_hat)
    zpl = scaled(real.pl, bset.pl_bar, bset.pl_hat)
    if zpv is None or zpl is None:
        return False
    return zpv.sum() <= bset.beta_pv + tol and (zpl.sum(axis=0) <= bset.beta_pl + tol).all()


def count_series(n_slots: int, beta: int) -> int:
    return sum(math.comb(n_slots, k) * 2**k for k in range(min(beta, n_slots) + 1))


def _series(bset: BudgetedSet, pv: bool, pl: bool) -> list[tuple[str, int, np.ndarray, int]]:
    """(kind, bus, deviable slots, budget) for every independent series."""
    out = []
    if pv:
        out.append(("pv", -1, np.flatnonzero(bset.pv_hat > 0), bset.beta_pv))
    if pl:
        for b in range(bset.pl_bar.shape[1]):
            out.append(("pl", b, np.flatnonzero(bset.pl_hat[:, b] > 0), bset.beta_pl))
    return out


def count_extreme_points(bset: BudgetedSet, pv: bool = True, pl: bool = True) -> int:
    total = 1
    for _, _, slots, beta in _series(bset, pv, pl):
        total *= count_series(len(slots), beta)
    return total


def _series_patterns(slots: np.ndarray, beta: int) -> list[tuple[tuple[int, int], ...]]:
    pats = []
    for k in range(min(beta, len(slots)) + 1):
        for pos in itertools.combinations(slots.tolist(), k):
            for signs in itertools.product((1, -1), repeat=k):
                pats.append(tuple(zip(pos, signs)))
    return pats


def enumerate_extreme_points(bset: BudgetedSet, limit: int = DEFAULT_ENUM_LIMIT, pv: bool = True,
                             pl: bool = True) -> Iterator[ExtremePoint]:
    """Yield every budget-feasible deviation pattern exactly once.

    Slots with zero deviation are never selected.  ``pv``/``pl`` switch the
    corresponding series off (held at nominal).
    """
    count = count_extreme_points(bset, pv, pl)
    if count > limit:
        raise CapacityError(count, limit)
    T, B = bset.pl_bar.shape
    series = _series(bset, pv, pl)
    per = [_series_patterns(slots, beta) for _, _, slots, beta in series]
    for combo in itertools.product(*per):
        ep = ExtremePoint.nominal(T, B)
        for (kind, bus, _, _), pat in zip(series, combo):
            for t, sign in pat:
                if kind == "pv":
                    (ep.u_plus if sign > 0 else ep.u_minus)[t] = 1
                else:
                    (ep.v_plus if sign > 0 else ep.v_minus)[t, bus] = 1
        yield ep


# ---------------------------------------------------------------------------
# scenario reduction


@dataclass(frozen=True)
class Reduction:
    kept: tuple  # original sample indices, ascending
    probabilities: np.ndarray  # aligned with ``kept``
    deletion_order: tuple


def _distances(pv_samples: np.ndarray) -> np.ndarray:
    x = np.asarray(pv_samples, dtype=float).reshape(len(pv_samples), -1)
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def backward_reduction(pv_samples, k: int, probabilities=None) -> Reduction:
    """Greedy backward reduction on Euclidean trajectory distance.

    Each step deletes the survivor whose removal adds the least transport cost
    (every sample reassigned to its nearest survivor).  Ties delete the highest
    index, so the kept set is the lexicographically smallest candidate.  Deleted probability moves to the nearest kept sample.
    """
    x = np.asarray(pv_samples, dtype=float)
    n = len(x)
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > n:
        raise ValueError(f"cannot keep {k} of {n} samples")
    p = np.full(n, 1.0 / n) if probabilities is None else np.array(probabilities, dtype=float)
    if abs(p.sum() - 1.0) > 1e-9 or (p < 0).any():
        raise ValueError("sample probabilities must be non-negative and sum to 1")
    d = _distances(x)
    alive = list(range(n))
    order = []
    rows = np.arange(n)
    while len(alive) > k:
        da = d[:, alive]
        near = np.argmin(da, axis=1)
        first = da[rows, near]
        masked = da.copy()
        masked[rows, near] = np.inf
        second = masked.min(axis=1)
        base = float(p @ first)
        # cost after deleting survivor m: rows whose nearest is m fall back to their second nearest
        cost = np.array([base + float(p[near == m] @ (second[near == m] - first[near == m]))
                         for m in range(len(alive))])
        m = int(np.flatnonzero(cost <= cost.min() + 1e-12)[-1])
        order.append(alive.pop(m))
    _, q = reduction_cost(x, alive, p)
    return Reduction(tuple(alive), _frozen(q / q.sum()), tuple(order))


def reduction_cost(pv_samples, kept, probabilities=None) -> tuple[float, np.ndarray]:
    """Transport cost of keeping ``kept`` with nearest-kept reassignment; returns (cost, new probabilities)."""
    x = np.asarray(pv_samples, dtype=float)
    n = len(x)
    p = np.full(n, 1.0 / n) if probabilities is None else np.asarray(probabilities, dtype=float)
    d = _distances(x)
    kept = list(kept)
    q = np.zeros(len(kept))
    cost = 0.0
    for i in range(n):
        j = min(range(len(kept)), key=lambda m: (d[i, kept[m]], kept[m]))
        q[j] += p[i]
        cost += p[i] * d[i, kept[j]]
    return cost, q


def best_subset_reduction(pv_samples, k: int, probabilities=None) -> Reduction:
    """Exhaustive counterpart of :func:`backward_reduction` (small inputs only)."""
    n = len(pv_samples)
    best = None
    for kept in itertools.combinations(range(n), k):
        cost, q = reduction_cost(pv_samples, kept, probabilities)
        if best is None or cost < best[0] - 1e-12:
            best = (cost, kept, q)
    return Reduction(best[1], _frozen(best[2]), ())


def reduce_scenarios(pv_samples, k: int, pl_samples=None, ql_samples=None, price_samples=None,
                     probabilities=None) -> ScenarioSet:
    """Reduce paired PV/demand samples to ``k`` representative scenarios.

    Distances use PV trajectories only; demand and other data follow their PV sample.
    """
    red = backward_reduction(pv_samples, k, probabilities)
    idx = list(red.kept)

    def pick(a):
        return None if a is None else _frozen(np.asarray(a, dtype=float)[idx])

    pv = np.asarray(pv_samples, dtype=float)
    pl = pick(pl_samples)
    if pl is None:
        pl = _frozen(np.zeros((len(idx), pv.shape[1], 0)))
    return ScenarioSet(red.probabilities, _frozen(pv[idx]), pl, pick(ql_samples), pick(price_samples), tuple(idx))


def case_scenarios(case: CaseData) -> ScenarioSet:
    return ScenarioSet(case.probabilities, case.pv_profile.pv, case.loads.pl, case.loads.ql,
                       case.costs.price, tuple(range(case.n_scen)))


def reduce_case(case: CaseData, k: int) -> CaseData:
    """Case with its scenarios reduced to ``k`` by backward reduction."""
    ss = reduce_scenarios(case.pv_profile.pv, k, case.loads.pl, case.loads.ql, case.costs.price,
                          case.probabilities)
    return case.with_scenarios(ss.probabilities, ss.pv, ss.pl, ss.ql, ss.price)
