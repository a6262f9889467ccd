import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from derplan.uncertainty import (
    BudgetedSet,
    CapacityError,
    ExtremePoint,
    Realization,
    backward_reduction,
    best_subset_reduction,
    budgeted_set,
    contains,
    count_extreme_points,
    count_series,
    enumerate_extreme_points,
    envelope_from_history,
    envelope_from_scenarios,
    realize,
    reduce_case,
    reduce_scenarios,
    reduction_cost,
)


def _set(T=3, B=1, beta_pv=0, beta_pl=0, pv_hat=0.1, pl_hat=2.0):
    return BudgetedSet(np.full(T, 0.5), np.full(T, pv_hat), np.full((T, B), 10.0), np.full((T, B), pl_hat),
                       beta_pv, beta_pl)


# envelopes

def test_constant_history():
    bar, hat = envelope_from_history(np.full((4, 6), 0.5))
    assert np.allclose(bar, 0.5) and np.allclose(hat, 0.0)


def test_two_sample_percentiles():
    bar, hat = envelope_from_history(np.array([[0.0, 1.0]]), 15, 85)
    # linear interpolation: 15th percentile 0.15, 85th 0.85
    assert bar[0] == pytest.approx(0.5)
    assert hat[0] == pytest.approx(0.35)


def test_symmetric_samples():
    h = np.array([[0.2, 0.4, 0.6, 0.8]])
    bar, hat = envelope_from_history(h, 10, 90)
    assert hat[0] == pytest.approx(np.percentile(h[0], 90) - bar[0])
    assert hat[0] == pytest.approx(bar[0] - np.percentile(h[0], 10))


def test_history_shape_checked():
    with pytest.raises(ValueError):
        envelope_from_history(np.ones((3, 1)))


def test_scenario_envelope_weighted():
    bar, hat = envelope_from_scenarios(np.array([[1.0], [3.0]]), [0.25, 0.75])
    assert bar[0] == pytest.approx(2.5) and hat[0] == pytest.approx(1.5)


def test_bundled_set_is_physical(toy5):
    bs = budgeted_set(toy5, 5, 5)
    assert (bs.pv_bar - bs.pv_hat >= -1e-12).all() and (bs.pv_bar + bs.pv_hat <= 1 + 1e-12).all()
    assert (bs.pl_bar - bs.pl_hat >= -1e-12).all()


def test_budget_validation():
    with pytest.raises(ValueError):
        _set(T=3, beta_pv=4)
    with pytest.raises(ValueError):
        _set(beta_pl=1.5)


# extreme points

def test_nominal_pattern_gives_nominal_realization():
    bs = _set(beta_pv=2, beta_pl=1)
    real = realize(bs, ExtremePoint.nominal(3, 1))
    assert np.array_equal(real.pv, bs.pv_bar) and np.array_equal(real.pl, bs.pl_bar)


def test_up_and_down_rejected():
    bs = _set(beta_pv=2)
    ep = ExtremePoint.nominal(3, 1)
    ep.u_plus[0] = ep.u_minus[0] = 1
    with pytest.raises(ValueError):
        realize(bs, ep)


def test_budget_respected_over_day():
    bs = _set(T=24, beta_pv=5)
    ep = ExtremePoint.nominal(24, 1)
    ep.u_minus[:6] = 1
    with pytest.raises(ValueError):
        realize(bs, ep)
    ep.u_minus[5] = 0
    real = realize(bs, ep)
    assert int((np.abs(real.pv - bs.pv_bar) > 0).sum()) == 5


@pytest.mark.parametrize("T,beta,expected", [(3, 0, 1), (3, 2, 19), (2, 1, 5)])
def test_series_counts(T, beta, expected):
    assert count_series(T, beta) == expected
    bs = _set(T=T, beta_pv=beta, pl_hat=0.0)
    assert count_extreme_points(bs, pl=False) == expected
    assert len(list(enumerate_extreme_points(bs, pl=False))) == expected


def test_two_series_product():
    bs = _set(T=2, beta_pv=1, beta_pl=1)
    pts = list(enumerate_extreme_points(bs))
    assert len(pts) == count_extreme_points(bs) == 25
    assert len({p.key() for p in pts}) == 25


def test_zero_deviation_slots_not_enumerated():
    bs = BudgetedSet(np.full(3, 0.5), np.array([0.1, 0.0, 0.1]), np.zeros((3, 1)), np.zeros((3, 1)), 2, 0)
    assert count_extreme_points(bs) == count_series(2, 2)


def test_enumeration_limit():
    bs = _set(T=6, B=2, beta_pv=3, beta_pl=3)
    with pytest.raises(CapacityError):
        list(enumerate_extreme_points(bs, limit=100))


@settings(max_examples=25, deadline=None)
@given(T=st.integers(1, 3), B=st.integers(1, 2), bpv=st.integers(0, 3), bpl=st.integers(0, 2),
       seed=st.integers(0, 1000))
def test_membership_closure(T, B, bpv, bpl, seed):
    rng = np.random.default_rng(seed)
    bs = BudgetedSet(rng.uniform(0.2, 0.8, T), rng.uniform(0, 0.2, T), rng.uniform(5, 20, (T, B)),
                     rng.uniform(0, 5, (T, B)), min(bpv, T), min(bpl, T))
    for ep in enumerate_extreme_points(bs, limit=20_000):
        assert contains(bs, realize(bs, ep))


def test_contains_rejects_outside():
    bs = _set(beta_pv=1)
    pv = bs.pv_bar.copy()
    pv[:2] -= bs.pv_hat[:2]
    assert not contains(bs, Realization(pv, bs.pl_bar))
    pv[1] = bs.pv_bar[1]
    assert contains(bs, Realization(pv, bs.pl_bar))


# scenario reduction

def test_reduce_keep_all_is_identity():
    x = np.random.default_rng(0).uniform(size=(5, 4))
    ss = reduce_scenarios(x, 5)
    assert ss.indices == tuple(range(5))
    assert np.allclose(ss.probabilities, 0.2)
    assert np.array_equal(ss.pv, x)


def test_identical_samples_merge():
    x = np.array([[0.3, 0.4], [0.3, 0.4]])
    ss = reduce_scenarios(x, 1)
    assert ss.size == 1 and ss.probabilities[0] == pytest.approx(1.0)


HAND = np.array([[0.0, 0.0], [0.05, 0.0], [0.0, 0.1], [1.0, 1.0], [1.1, 1.0]])
HAND_P = [0.2, 0.2, 0.2, 0.3, 0.1]


def test_hand_case_matches_exhaustive():
    red = backward_reduction(HAND, 2, HAND_P)
    best = best_subset_reduction(HAND, 2, HAND_P)
    assert red.kept == best.kept == (0, 3)
    assert np.allclose(red.probabilities, best.probabilities)
    assert np.allclose(red.probabilities, [0.6, 0.4])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 6))
def test_single_deletion_is_exact(seed, n):
    x = np.random.default_rng(seed).uniform(size=(n, 3))
    assert backward_reduction(x, n - 1).kept == best_subset_reduction(x, n - 1).kept


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(1, 4))
def test_greedy_never_beats_exhaustive(seed, k):
    x = np.random.default_rng(seed).uniform(size=(5, 3))
    greedy = reduction_cost(x, backward_reduction(x, k).kept)[0]
    assert greedy >= reduction_cost(x, best_subset_reduction(x, k).kept)[0] - 1e-12


def test_reduce_bad_k():
    with pytest.raises(ValueError):
        reduce_scenarios(np.zeros((2, 3)), 3)


def test_reduce_case(toy5):
    r = reduce_case(toy5, 2)
    assert r.n_scen == 2 and r.probabilities.sum() == pytest.approx(1.0)
