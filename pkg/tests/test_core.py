import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scootsub.core import (
    DEFAULT_SCHEME,
    DemandForecast,
    DistanceBinScheme,
    InputError,
    ModalTripMatrix,
    TransitAccessProfile,
    ZoneId,
    ZoneProfile,
    validate_trip_matrix,
)
from scootsub.factor import FactorModelParams

from .conftest import make_profile, small_matrix


def test_valid_matrix_has_empty_report():
    m = small_matrix(np.ones((2, 2, 2)))
    assert validate_trip_matrix(m) == []


def test_negative_count_reported_with_location():
    counts = np.ones((2, 2, 2))
    counts[1, 0, 1] = -1
    report = validate_trip_matrix(small_matrix(counts))
    assert len(report) == 1
    assert report[0].kind == "negative"
    assert report[0].index == ("transit", "a", 1)


def test_nan_count_reported_as_non_finite():
    counts = np.ones((2, 2, 2))
    counts[0, 1, 0] = np.nan
    report = validate_trip_matrix(small_matrix(counts))
    assert [v.kind for v in report] == ["non-finite"]


def test_dimension_mismatch_reported():
    m = ModalTripMatrix(("taxi",), (ZoneId("a"),), DistanceBinScheme.uniform(2), np.ones((1, 2, 2)))
    assert [v.kind for v in validate_trip_matrix(m)] == ["dimension"]


def test_matrix_is_read_only_and_marginals_sum_bins():
    m = small_matrix(np.arange(8.0).reshape(2, 2, 2))
    with pytest.raises(ValueError):
        m.counts[0, 0, 0] = 5
    assert np.array_equal(m.marginals(), m.counts.sum(axis=2))


def test_default_scheme():
    s = DEFAULT_SCHEME
    assert s.n_bins == 14
    assert s.edges[0] == 0 and s.upper == 14
    assert s.delta[:3] == (0.5, 1.5, 2.5)
    assert s.bin_of(0.8) == 0
    assert s.bin_of(13.99) == 13
    with pytest.raises(ValueError):
        s.bin_of(14.0)


@pytest.mark.parametrize("edges,delta", [
    ((1, 2, 3), ()),
    ((0, 2, 1), ()),
    ((0, 1, 2), (1.0, 1.5)),  # delta on the bin edge
    ((0,), ()),
])
def test_bad_schemes_rejected(edges, delta):
    with pytest.raises(InputError):
        DistanceBinScheme(edges, delta)


def test_profile_derives_density():
    p = make_profile(population=5608.0, area=1.0)
    assert p.density == 5608.0


@pytest.mark.parametrize("field", ["median_income", "labor_rate", "health_insurance_rate", "age_ratio_20_40",
                                   "median_age"])
def test_profile_rejects_nonpositive_log_fields(field):
    with pytest.raises(InputError, match=f"nonpositive field: {field}"):
        make_profile(**{field: 0.0})


def test_profile_density_consistency():
    make_profile(population=1000.0, area=1.0, density=1004.0)
    with pytest.raises(InputError, match="inconsistent"):
        make_profile(population=1000.0, area=1.0, density=1010.0)


def test_zone_ordering_within_system_only():
    assert ZoneId("a", "taz") < ZoneId("b", "taz")
    with pytest.raises(TypeError):
        ZoneId("a", "taz") < ZoneId("b", "zip")
    with pytest.raises(InputError):
        ZoneId("")


@pytest.mark.parametrize("t", [-0.1, 2.0, float("nan")])
def test_access_times_sanity_bound(t):
    with pytest.raises(InputError):
        TransitAccessProfile(ZoneId("a"), t, 0.1)


def test_forecast_must_be_nonnegative():
    with pytest.raises(InputError):
        DemandForecast(ZoneId("a"), -1.0)


# --- round trips through JSON ----------------------------------------------

pos = st.floats(min_value=1e-6, max_value=1e9, allow_nan=False, allow_infinity=False)
frac = st.floats(min_value=1e-6, max_value=1.0)
pct = st.floats(min_value=1e-6, max_value=100.0)
zone_ids = st.text(alphabet="abcxyz0123456789", min_size=1, max_size=8)


def _json_roundtrip(d):
    return json.loads(json.dumps(d))


@given(zone_ids, pos, pos, pos, frac, pct, pos, pct, st.floats(0, 100))
def test_profile_roundtrip(z, pop, area, age, ratio, labor, income, hi, unemp):
    p = ZoneProfile(zone=ZoneId(z, "zip"), population=pop, area=area, median_age=age, age_ratio_20_40=ratio,
                    labor_rate=labor, median_income=income, health_insurance_rate=hi, unemployment_rate=unemp)
    assert ZoneProfile.from_dict(_json_roundtrip(p.to_dict())) == p


@given(st.lists(st.floats(0.01, 10), min_size=1, max_size=6), st.data())
def test_scheme_roundtrip(widths, data):
    edges = [0.0]
    for w in widths:
        edges.append(edges[-1] + w)
    delta = [data.draw(st.floats(lo, hi, exclude_min=True, exclude_max=True)) for lo, hi in zip(edges, edges[1:])]
    s = DistanceBinScheme(tuple(edges), tuple(delta))
    assert DistanceBinScheme.from_dict(_json_roundtrip(s.to_dict())) == s


@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.data())
def test_matrix_roundtrip(M, n, D, data):
    counts = np.array(data.draw(st.lists(st.floats(0, 1e7), min_size=M * n * D, max_size=M * n * D)))
    m = ModalTripMatrix(tuple(f"m{k}" for k in range(M)), tuple(ZoneId(f"z{i}") for i in range(n)),
                        DistanceBinScheme.uniform(D), counts.reshape(M, n, D))
    back = ModalTripMatrix.from_dict(_json_roundtrip(m.to_dict()))
    assert back == m


@given(zone_ids, st.floats(0, 1.99), st.floats(0, 1.99), st.floats(0, 1e6))
def test_access_and_forecast_roundtrip(z, a, e, trips):
    ap = TransitAccessProfile(ZoneId(z), a, e)
    assert TransitAccessProfile.from_dict(_json_roundtrip(ap.to_dict())) == ap
    f = DemandForecast(ZoneId(z), trips)
    assert DemandForecast.from_dict(_json_roundtrip(f.to_dict())) == f


@given(st.floats(0, 1e4), st.lists(st.floats(0, 1), min_size=1, max_size=4),
       st.lists(st.floats(0, 5), min_size=1, max_size=3), st.tuples(*[st.floats(0, 1)] * 3))
def test_factor_params_roundtrip(c, fr, betas, acc):
    p = FactorModelParams(c, {f"m{k}": f for k, f in enumerate(fr)}, tuple(betas), acc)
    assert FactorModelParams.from_dict(_json_roundtrip(p.to_dict())) == p
