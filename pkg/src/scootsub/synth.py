"""Synthetic scenarios with planted parameters, plus brute-force oracles.

The forward evaluator here is deliberately written with plain loops and
its own clamping so that it shares no code with :mod:`scootsub.factor`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    DEFAULT_SCHEME,
    TRANSIT,
    DemandForecast,
    DistanceBinScheme,
    InputError,
    ModalTripMatrix,
    TransitAccessProfile,
    ZoneId,
    ZoneProfile,
)
from . import factor
from .factor import FactorModelParams
from . import ingest

SURVEY_MODES = ("carpool", "transit", "taxi", "bike", "walk", "auto")

# Average daily trips per zone by mode, from the household survey summary.
MODE_MEANS = {"carpool": 296.0, "transit": 5314.0, "taxi": 825.0, "bike": 350.0,
              "walk": 11162.0, "auto": 661.0, "citibike": 122.0}
# Decay length (miles) of each mode's trip-distance profile.
MODE_DECAY = {"carpool": 4.0, "transit": 3.0, "taxi": 2.0, "bike": 1.5,
              "walk": 0.7, "auto": 4.0, "citibike": 1.5}

DEFAULT_DEMAND_COEFFS = {
    "const": -7.0,
    "density*age_ratio_20_40": 0.8,
    "labor_rate": 1.5,
    "median_income": -0.5,
    "health_insurance_rate": 1.0,
}


def default_factor_params(modes: Sequence[str] = SURVEY_MODES) -> FactorModelParams:
    fr = {m: 0.0 for m in modes}
    if "taxi" in fr:
        fr["taxi"] = 0.05
    return FactorModelParams(150.0, fr, (0.1,), (0.0, 0.0, 0.004))


@dataclass
class ScenarioConfig:
    n_zones: int = 50
    modes: tuple[str, ...] = SURVEY_MODES
    scheme: DistanceBinScheme = DEFAULT_SCHEME
    planted_demand_coeffs: dict = field(default_factory=lambda: dict(DEFAULT_DEMAND_COEFFS))
    planted_factor_params: FactorModelParams | None = None
    noise_sd_log: float = 0.0
    noise_sd_trips: float = 0.0
    seed: int = 0
    trip_sd: float = 0.6  # log-sd of zone totals per mode
    profile_sd: float = 0.3  # log-sd of per-bin jitter on the distance profile
    access_range: tuple[float, float] = (0.03, 0.2)  # hours

    def __post_init__(self):
        self.modes = tuple(self.modes)
        if self.n_zones < 2:
            raise InputError("a scenario needs at least 2 zones")
        if self.noise_sd_log < 0 or self.noise_sd_trips < 0:
            raise InputError("noise standard deviations must be >= 0")
        if self.planted_factor_params is None:
            self.planted_factor_params = default_factor_params(self.modes)
        unknown = set(self.planted_factor_params.mode_fractions) - set(self.modes)
        if unknown:
            raise InputError(f"planted fractions for modes not in the scenario: {sorted(unknown)}")
        if "const" not in self.planted_demand_coeffs:
            raise InputError("planted demand coefficients need a 'const' entry")

    @property
    def demand_predictors(self) -> tuple[str, ...]:
        return tuple(k for k in self.planted_demand_coeffs if k != "const")

    def to_dict(self) -> dict:
        return {
            "n_zones": self.n_zones,
            "modes": list(self.modes),
            "scheme": self.scheme.to_dict(),
            "planted_demand_coeffs": dict(self.planted_demand_coeffs),
            "planted_factor_params": self.planted_factor_params.to_dict(),
            "noise_sd_log": self.noise_sd_log,
            "noise_sd_trips": self.noise_sd_trips,
            "seed": self.seed,
            "trip_sd": self.trip_sd,
            "profile_sd": self.profile_sd,
            "access_range": list(self.access_range),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if "scheme" in d:
            d["scheme"] = DistanceBinScheme.from_dict(d["scheme"])
        if d.get("planted_factor_params") is not None:
            d["planted_factor_params"] = FactorModelParams.from_dict(d["planted_factor_params"])
        if "access_range" in d:
            d["access_range"] = tuple(d["access_range"])
        return cls(**d)


@dataclass
class Scenario:
    config: ScenarioConfig
    profiles: list[ZoneProfile]
    trips: ModalTripMatrix
    access: list[TransitAccessProfile]
    observed: dict[str, float]
    forecasts: list[DemandForecast]


def forward_substitution(
    params: FactorModelParams,
    trips: ModalTripMatrix,
    access: Sequence[TransitAccessProfile],
    transit_mode: str = TRANSIT,
) -> dict[str, float]:
    """Loop-by-loop evaluation of substituted trips per zone."""
    times = {a.zone.id: (a.access_time, a.egress_time) for a in access}
    delta = list(trips.scheme.delta)
    betas = list(params.distance_betas)
    shared = len(betas) == 1
    b0, b1, b2 = params.access_coeffs
    out = {}
    for i, zone in enumerate(trips.zones):
        shares = []
        for d in range(len(delta)):
            beta = betas[0] if shared else betas[d]
            p = beta / delta[d]
            if p > 1.0:
                p = 1.0
            shares.append(p)
        total = params.constant
        for m, mode in enumerate(trips.modes):
            f = params.mode_fractions.get(mode, 0.0)
            for d in range(len(delta)):
                total += f * shares[d] * float(trips.counts[m][i][d])
        if transit_mode in trips.modes:
            t = trips.modes.index(transit_mode)
            ta, te = times.get(zone.id, (0.0, 0.0))
            fp = b0 + b1 * ta + b2 * te
            fp = 0.0 if fp < 0.0 else (1.0 if fp > 1.0 else fp)
            for d in range(len(delta)):
                total += (1.0 - shares[d]) * fp * float(trips.counts[t][i][d])
        out[zone.id] = total
    return out


def brute_force_objective(
    params: FactorModelParams,
    forecasts: Sequence[DemandForecast],
    trips: ModalTripMatrix,
    access: Sequence[TransitAccessProfile],
    transit_mode: str = TRANSIT,
) -> float:
    """Sum of squared gaps between forecast and substituted trips."""
    pred = forward_substitution(params, trips, access, transit_mode)
    return math.fsum((f.trips - pred[f.zone.id]) ** 2 for f in forecasts)


def generate(config: ScenarioConfig) -> Scenario:
    rng = np.random.default_rng(config.seed)
    n = config.n_zones
    zones = [ZoneId(f"z{i + 1:03d}", "taz") for i in range(n)]

    density = np.exp(rng.normal(math.log(20000.0), 0.8, n))
    area = rng.uniform(0.05, 0.5, n)
    median_age = rng.uniform(28.0, 50.0, n)
    age_ratio = rng.uniform(0.2, 0.55, n)
    labor = rng.uniform(50.0, 80.0, n)
    income = np.exp(rng.normal(math.log(65000.0), 0.4, n))
    insured = rng.uniform(80.0, 99.0, n)
    unemployment = rng.uniform(2.0, 10.0, n)
    profiles = [
        ZoneProfile(zone=zones[i], population=float(density[i] * area[i]), area=float(area[i]),
                    median_age=float(median_age[i]), age_ratio_20_40=float(age_ratio[i]),
                    labor_rate=float(labor[i]), median_income=float(income[i]),
                    health_insurance_rate=float(insured[i]), unemployment_rate=float(unemployment[i]))
        for i in range(n)
    ]

    coeffs = config.planted_demand_coeffs
    log_noise = rng.normal(0.0, config.noise_sd_log, n) if config.noise_sd_log > 0 else np.zeros(n)
    observed = {}
    for i, p in enumerate(profiles):
        eta = coeffs["const"]
        for term in config.demand_predictors:
            x = 1.0
            for f in term.split("*"):
                x *= getattr(p, f)
            eta += coeffs[term] * math.log(x)
        observed[p.zone.id] = math.exp(eta + log_noise[i])

    delta = np.asarray(config.scheme.delta)
    counts = np.zeros((len(config.modes), n, len(delta)))
    for m, mode in enumerate(config.modes):
        mean = MODE_MEANS.get(mode, 500.0)
        decay = MODE_DECAY.get(mode, 2.0)
        totals = mean * np.exp(rng.normal(-0.5 * config.trip_sd**2, config.trip_sd, n))
        for i in range(n):
            w = np.exp(-delta / decay) * np.exp(rng.normal(0.0, config.profile_sd, len(delta)))
            counts[m, i] = totals[i] * w / w.sum()
    trips = ModalTripMatrix(config.modes, tuple(zones), config.scheme, counts)

    lo, hi = config.access_range
    ta = rng.uniform(lo, hi, n)
    te = rng.uniform(lo, hi, n)
    access = [TransitAccessProfile(zones[i], float(ta[i]), float(te[i])) for i in range(n)]

    clean = forward_substitution(config.planted_factor_params, trips, access)
    trip_noise = rng.normal(0.0, config.noise_sd_trips, n) if config.noise_sd_trips > 0 else np.zeros(n)
    forecasts = [DemandForecast(z, max(0.0, clean[z.id] + trip_noise[i])) for i, z in enumerate(zones)]
    return Scenario(config, profiles, trips, access, observed, forecasts)


def write_scenario(scn: Scenario, out_dir) -> list[Path]:
    """Write the scenario in the CSV schemas read by :mod:`scootsub.ingest`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "profiles": out / "profiles.csv",
        "observed": out / "observed.csv",
        "trips": out / "trips.csv",
        "access": out / "access.csv",
        "forecasts": out / "forecasts.csv",
        "spec": out / "spec.json",
        "truth": out / "truth.json",
    }
    ingest.write_zone_profiles(paths["profiles"], scn.profiles)
    ingest.write_zone_values(paths["observed"], scn.observed)
    ingest.write_trip_matrix(paths["trips"], scn.trips)
    ingest.write_access(paths["access"], scn.access)
    ingest.write_zone_values(paths["forecasts"], {f.zone.id: f.trips for f in scn.forecasts})
    paths["spec"].write_text(json.dumps({"response": "trips", "predictors": list(scn.config.demand_predictors)},
                                        indent=2) + "\n")
    paths["truth"].write_text(json.dumps(scn.config.to_dict(), indent=2) + "\n")
    return list(paths.values())


# --- Monte Carlo coverage of bootstrap intervals ----------------------------

# Two-mode design in which every planted parameter is identifiable from noisy
# forecasts: strongly varying distance profiles separate beta from F, and
# nonzero access coefficients keep the access term away from its bounds.
COVERAGE_TRUTH = FactorModelParams(150.0, {"taxi": 0.05, "transit": 0.02}, (0.1,), (0.01, 0.1, 0.2))


@dataclass
class CoverageResult:
    names: list[str]
    hits: np.ndarray  # (trials, params) bool: planted value inside the interval
    ci_level: float
    replicates: int

    @property
    def per_parameter(self) -> np.ndarray:
        return self.hits.mean(axis=0)

    @property
    def pooled(self) -> float:
        return float(self.hits.mean())


def coverage_study(
    n_trials: int = 50,
    B: int = 200,
    ci_level: float = 0.90,
    truth: FactorModelParams = COVERAGE_TRUTH,
    n_zones: int = 50,
    noise_sd_trips: float = 10.0,
    profile_sd: float = 1.0,
    seed0: int = 1000,
    n_starts: int = 8,
) -> CoverageResult:
    """Refit and bootstrap ``n_trials`` independent noisy scenarios with planted ``truth``."""
    modes = tuple(truth.mode_fractions)
    want = factor.pack(truth, modes)
    hits = np.zeros((n_trials, len(want)), dtype=bool)
    names = []
    for k in range(n_trials):
        cfg = ScenarioConfig(n_zones=n_zones, modes=modes, planted_factor_params=truth,
                             noise_sd_trips=noise_sd_trips, profile_sd=profile_sd, seed=seed0 + k)
        scn = generate(cfg)
        res = factor.fit(scn.forecasts, scn.trips, scn.access, factor.SolverConfig(n_starts=n_starts, seed=k))
        summ = factor.bootstrap(res, scn.forecasts, scn.trips, scn.access, B=B, seed=k, ci_level=ci_level)
        hits[k] = (np.asarray(summ.lower) <= want) & (want <= np.asarray(summ.upper))
        names = summ.names
    return CoverageResult(names, hits, ci_level, B)
