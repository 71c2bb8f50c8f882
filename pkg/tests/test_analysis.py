import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scootsub.analysis import (
    FareSchedule,
    market_revenue,
    substitution_revenue,
    substitution_shares,
    trip_duration,
)
from scootsub.core import DistanceBinScheme, InputError, TransitAccessProfile, ZoneId
from scootsub.factor import FactorModelParams, predict_substitution

from .conftest import small_matrix

NYC_FIT = FactorModelParams(203.618, {"taxi": 0.049, "transit": 0.0}, (0.104,), (0.0, 0.0, 0.004))


def test_trip_duration():
    assert trip_duration(2.0, 10.0) == 12.0
    assert trip_duration(0.0) == 0.0
    assert trip_duration(1.667, 10.0) == pytest.approx(10.0, abs=1e-2)
    with pytest.raises(ValueError):
        trip_duration(1.0, 0.0)


def test_market_revenue():
    assert market_revenue(66_000, 12) == pytest.approx((184_800.0, 67_452_000.0), rel=1e-12)
    assert market_revenue(0, 12) == (0.0, 0.0)
    assert market_revenue(1, 0)[0] == 1.0


def test_fare_must_be_nonnegative():
    with pytest.raises(InputError):
        FareSchedule(base=-1.0)


def test_direct_revenue_example():
    m = small_matrix([[[1000.0 / 0.5]]], modes=("taxi",), zones=("a",), scheme=DistanceBinScheme((0.0, 1.0)))
    p = FactorModelParams(0.0, {"taxi": 1.0}, (0.25,))  # P = 0.5 so 1000 trips are replaced
    preds = predict_substitution(p, m, None)
    rep = substitution_revenue(preds, m.scheme)
    assert rep.direct[0, 0] == pytest.approx(1450.0, rel=1e-12)
    assert rep.total_daily == pytest.approx(1450.0)
    assert rep.total_annual == pytest.approx(365 * 1450.0)


def test_zero_breakdowns_leave_only_unattributed():
    m = small_matrix(np.full((2, 2, 4), 50.0))
    acc = [TransitAccessProfile(z, 0.1, 0.1) for z in m.zones]
    preds = predict_substitution(FactorModelParams(10.0, {}, (0.0,)), m, acc)
    rep = substitution_revenue(preds, m.scheme, avg_duration=12.0)
    assert rep.direct.sum() == 0 and rep.access.sum() == 0
    assert rep.unattributed == pytest.approx(2 * 10.0 * 2.8)
    assert rep.total_daily == rep.unattributed


def test_access_revenue_uses_access_time_capped_at_direct():
    m = small_matrix([[[0.0, 0.0]], [[1000.0, 1000.0]]], zones=("a",), scheme=DistanceBinScheme((0.0, 1.0, 5.0)))
    acc = [TransitAccessProfile(ZoneId("a"), 0.1, 0.1)]  # 12 minutes of access+egress
    p = FactorModelParams(0.0, {}, (0.25,), (0.1, 0.0, 0.0))
    rep = substitution_revenue(predict_substitution(p, m, acc), m.scheme, speed=10.0)
    # bin 0: P=0.5, direct ride 3 min < 12 min, so capped at 3
    assert rep.access[0] == pytest.approx(0.5 * 0.1 * 1000 * (1 + 0.15 * 3))
    # bin 1: delta 3 mi, P=1/12, direct ride 18 min > 12 min
    assert rep.access[1] == pytest.approx((11 / 12) * 0.1 * 1000 * (1 + 0.15 * 12))


def test_access_trips_without_times_is_fatal():
    m = small_matrix([[[0.0]], [[1000.0]]], zones=("a",), scheme=DistanceBinScheme((0.0, 1.0)))
    acc = [TransitAccessProfile(ZoneId("a"), 0.1, 0.1)]
    preds = predict_substitution(FactorModelParams(0.0, {}, (0.0,), (0.1, 0, 0)), m, acc)
    broken = [type(p)(**{**p.__dict__, "access_hours": None}) for p in preds]
    with pytest.raises(InputError, match="access/egress times missing"):
        substitution_revenue(broken, m.scheme)


def test_report_components_sum_to_total():
    rng = np.random.default_rng(0)
    m = small_matrix(rng.uniform(0, 1000, (2, 4, 14)), zones=tuple("abcd"))
    acc = [TransitAccessProfile(z, 0.05, 0.081) for z in m.zones]
    rep = substitution_revenue(predict_substitution(NYC_FIT, m, acc), m.scheme)
    comp = rep.mode_totals()
    assert sum(comp.values()) == pytest.approx(rep.total_daily, rel=1e-12)
    d = rep.to_dict()
    assert d["annual_by_component"]["taxi"] == pytest.approx(365 * comp["taxi"])
    assert len(d["by_distance"]) == 14


def test_first_mile_taxi_share():
    m = small_matrix([[[1000.0, 1000.0]], [[5000.0, 5000.0]]], zones=("a",),
                     scheme=DistanceBinScheme((0.0, 1.0, 3.0)))
    acc = [TransitAccessProfile(ZoneId("a"), 0.0, 0.081)]
    sh = substitution_shares(predict_substitution(NYC_FIT, m, acc), m)
    assert sh.cell[("taxi", "a", "0-1")] == pytest.approx(0.049 * 0.208, rel=1e-12)
    assert sh.cell[("taxi", "a", "0-1")] == pytest.approx(0.010192, abs=1e-9)
    short = sh.cell[("transit_access", "a", "0-1")]
    longer = sh.cell[("transit_access", "a", "1-3")]
    assert short <= 0.000324 and longer <= 0.000324
    assert longer > short  # (1 - P_d) grows with distance
    assert sh.cell[("transit", "a", "0-1")] == 0.0


def test_zero_parameters_zero_shares_and_absent_base():
    m = small_matrix([[[10.0, 0.0]], [[4.0, 2.0]]], zones=("a",), scheme=DistanceBinScheme((0.0, 1.0, 2.0)))
    sh = substitution_shares(predict_substitution(FactorModelParams.zeros(("taxi", "transit")), m, None), m)
    assert sh.cell[("taxi", "a", "0-1")] == 0.0
    assert sh.cell[("taxi", "a", "1-2")] is None
    assert ("taxi", "all", "1-2") in {(r[0], r[1], r[2]) for r in sh.rows()}


@given(arrays(np.float64, (2, 3, 4), elements=st.floats(1, 1e4)), st.floats(0, 1), st.floats(0, 1), st.floats(0, 5))
def test_direct_share_is_closed_form(counts, f_taxi, f_transit, beta):
    m = small_matrix(counts, zones=("a", "b", "c"))
    p = FactorModelParams(0.0, {"taxi": f_taxi, "transit": f_transit}, (beta,))
    sh = substitution_shares(predict_substitution(p, m, None), m)
    for d, lab in enumerate(m.scheme.labels()):
        share = min(1.0, beta / m.scheme.delta[d])
        for z in ("a", "b", "c"):
            assert sh.cell[("taxi", z, lab)] == pytest.approx(f_taxi * share, rel=1e-12, abs=1e-300)
            assert 0 <= sh.cell[("transit", z, lab)] <= 1


fares = st.builds(FareSchedule, st.floats(0, 5), st.floats(0, 1))


@settings(max_examples=50)
@given(st.floats(0, 1e5), st.floats(0, 60), fares, st.floats(0, 1e4), st.floats(0, 30), st.floats(0, 1))
def test_market_revenue_monotone(trips, dur, fare, d_trips, d_dur, d_rate):
    base = market_revenue(trips, dur, fare)[0]
    assert market_revenue(trips + d_trips, dur, fare)[0] >= base
    assert market_revenue(trips, dur + d_dur, fare)[0] >= base
    assert market_revenue(trips, dur, FareSchedule(fare.base + d_rate, fare.per_minute))[0] >= base
    assert market_revenue(trips, dur, FareSchedule(fare.base, fare.per_minute + d_rate))[0] >= base


@settings(max_examples=30)
@given(st.permutations(list(range(5))), st.floats(0, 1), st.floats(0, 2))
def test_revenue_permutation_invariant_over_zones(perm, f, beta):
    rng = np.random.default_rng(1)
    counts = rng.uniform(0, 500, (2, 5, 14))
    zones = tuple("abcde")
    acc = [TransitAccessProfile(ZoneId(z), 0.1, 0.05) for z in zones]
    p = FactorModelParams(5.0, {"taxi": f, "transit": 0.0}, (beta,), (0.0, 0.1, 0.1))
    m1 = small_matrix(counts, zones=zones)
    m2 = small_matrix(counts[:, perm, :], zones=tuple(zones[i] for i in perm))
    r1 = substitution_revenue(predict_substitution(p, m1, acc), m1.scheme)
    r2 = substitution_revenue(predict_substitution(p, m2, acc), m2.scheme)
    assert r2.total_daily == pytest.approx(r1.total_daily, rel=1e-12)
