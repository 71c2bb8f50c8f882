import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scootsub.core import InputError
from scootsub.factor import FactorModel, FactorModelParams, SolverConfig, build_data, fit, pack, unpack
from scootsub.synth import ScenarioConfig, brute_force_objective, generate, write_scenario


def test_same_seed_same_scenario():
    a = generate(ScenarioConfig(n_zones=10, seed=4, noise_sd_log=0.2, noise_sd_trips=3.0))
    b = generate(ScenarioConfig(n_zones=10, seed=4, noise_sd_log=0.2, noise_sd_trips=3.0))
    assert a.profiles == b.profiles and a.trips == b.trips and a.access == b.access
    assert a.observed == b.observed and a.forecasts == b.forecasts
    c = generate(ScenarioConfig(n_zones=10, seed=5))
    assert c.trips != a.trips


def test_config_validation_and_round_trip():
    with pytest.raises(InputError):
        ScenarioConfig(n_zones=1)
    with pytest.raises(InputError):
        ScenarioConfig(noise_sd_trips=-1.0)
    cfg = ScenarioConfig(n_zones=7, seed=3, noise_sd_log=0.1)
    assert ScenarioConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_planted_parameters_give_zero_objective(noiseless_scenario):
    s = noiseless_scenario
    assert brute_force_objective(s.config.planted_factor_params, s.forecasts, s.trips, s.access) < 1e-18


@st.composite
def feasible_params(draw, modes):
    return FactorModelParams(
        draw(st.floats(0, 400)),
        {m: draw(st.floats(0, 1)) for m in modes},
        (draw(st.floats(0, 3)),),
        (draw(st.floats(0, 0.5)), draw(st.floats(0, 5)), draw(st.floats(0, 5))),
    )


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_brute_force_matches_vectorized_objective(small_scenario, data):
    s = small_scenario
    p = data.draw(feasible_params(s.trips.modes))
    model = FactorModel(build_data(s.trips, s.access, s.forecasts), 1)
    z_fast = model.objective(pack(p, s.trips.modes))
    z_slow = brute_force_objective(p, s.forecasts, s.trips, s.access)
    assert z_fast == pytest.approx(z_slow, rel=1e-10, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 8), st.floats(1e-3, 0.2))
def test_perturbing_truth_increases_objective(noiseless_scenario, j, eps):
    s = noiseless_scenario
    truth = s.config.planted_factor_params
    theta = pack(truth, s.trips.modes)
    theta[j] += eps * max(theta[j], 1e-2)
    p = unpack(np.clip(theta, 0, None), s.trips.modes, 1)
    assert brute_force_objective(p, s.forecasts, s.trips, s.access) > 0


def test_write_scenario_files(tmp_path):
    scn = generate(ScenarioConfig(n_zones=4, seed=0))
    paths = write_scenario(scn, tmp_path)
    assert {p.name for p in paths} == {"profiles.csv", "observed.csv", "trips.csv", "access.csv",
                                       "forecasts.csv", "spec.json", "truth.json"}
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert truth["planted_factor_params"]["constant"] == 150.0


def parameter_error(n_zones, seed):
    truth = FactorModelParams(150.0, {"taxi": 0.05, "transit": 0.02}, (0.1,), (0.01, 0.1, 0.2))
    cfg = ScenarioConfig(n_zones=n_zones, modes=("taxi", "transit"), planted_factor_params=truth,
                         noise_sd_trips=10.0, profile_sd=1.0, seed=seed)
    s = generate(cfg)
    res = fit(s.forecasts, s.trips, s.access, SolverConfig(n_starts=2, seed=seed))
    want = pack(truth, s.trips.modes)
    got = pack(res.params, s.trips.modes)
    return float(np.linalg.norm((got - want) / np.maximum(want, 1e-2)))


@pytest.mark.slow
def test_more_zones_reduce_parameter_error_on_average():
    small = np.mean([parameter_error(25, 500 + k) for k in range(20)])
    large = np.mean([parameter_error(50, 600 + k) for k in range(20)])
    assert large < small
