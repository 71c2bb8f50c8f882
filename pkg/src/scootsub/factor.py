"""Distance-based multifactor model of e-scooter substitution.

Forecast zonal demand is explained as

    R_sub,i = C + sum_m F_m sum_d P_d N[m,i,d] + sum_d (1 - P_d) F'_i N[pt,i,d]

with ``P_d = min(1, beta_d / delta_d)`` the share of trips in distance bin
``d`` exposed to competition and ``F'_i = clip(b0 + b1 t_access + b2 t_egress)``
the share of transit trips whose access or egress leg can be replaced.
Parameters are calibrated by box-constrained least squares and their
uncertainty is read off a zone bootstrap.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import (
    TRANSIT,
    DemandForecast,
    InputError,
    ModalTripMatrix,
    NumericalError,
    TransitAccessProfile,
    ZoneId,
)

log = logging.getLogger(__name__)

SHARED = "shared"
PER_BIN = "per-bin"


@dataclass(frozen=True)
class FactorModelParams:
    constant: float
    mode_fractions: dict[str, float]
    distance_betas: tuple[float, ...]
    access_coeffs: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "distance_betas", tuple(float(b) for b in self.distance_betas))
        object.__setattr__(self, "access_coeffs", tuple(float(b) for b in self.access_coeffs))
        object.__setattr__(self, "mode_fractions", {m: float(f) for m, f in self.mode_fractions.items()})
        if len(self.access_coeffs) != 3:
            raise InputError("need exactly three access coefficients (intercept, access time, egress time)")
        if not self.distance_betas:
            raise InputError("need at least one distance beta")
        bad = []
        if not self.constant >= 0:
            bad.append("C")
        bad += [f"F_{m}" for m, f in self.mode_fractions.items() if not 0 <= f <= 1]
        bad += ["beta" for b in self.distance_betas if not b >= 0]
        bad += [f"beta_{j}" for j, b in enumerate(self.access_coeffs) if not b >= 0]
        if bad:
            raise InputError(f"parameters outside their bounds: {', '.join(bad)}")

    @property
    def beta_mode(self) -> str:
        return SHARED if len(self.distance_betas) == 1 else PER_BIN

    @classmethod
    def zeros(cls, modes: Sequence[str], n_betas: int = 1, constant: float = 0.0) -> "FactorModelParams":
        return cls(constant, {m: 0.0 for m in modes}, (0.0,) * n_betas)

    def to_dict(self) -> dict:
        return {
            "constant": self.constant,
            "mode_fractions": dict(self.mode_fractions),
            "distance_betas": list(self.distance_betas),
            "beta_mode": self.beta_mode,
            "access_coeffs": list(self.access_coeffs),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FactorModelParams":
        return cls(d["constant"], dict(d["mode_fractions"]), tuple(d["distance_betas"]), tuple(d["access_coeffs"]))


def parameter_names(modes: Sequence[str], n_betas: int, bin_labels: Sequence[str] = ()) -> list[str]:
    if n_betas == 1:
        betas = ["beta"]
    else:
        betas = [f"beta[{lab}]" for lab in (bin_labels or range(n_betas))]
    return ["C", *(f"F_{m}" for m in modes), *betas, "beta_0", "beta_1", "beta_2"]


def pack(params: FactorModelParams, modes: Sequence[str]) -> np.ndarray:
    return np.array(
        [params.constant, *(params.mode_fractions.get(m, 0.0) for m in modes),
         *params.distance_betas, *params.access_coeffs],
        dtype=float,
    )


def unpack(theta: np.ndarray, modes: Sequence[str], n_betas: int) -> FactorModelParams:
    M = len(modes)
    return FactorModelParams(
        float(theta[0]),
        dict(zip(modes, map(float, theta[1 : 1 + M]))),
        tuple(map(float, theta[1 + M : 1 + M + n_betas])),
        tuple(map(float, theta[1 + M + n_betas :])),
    )


def bounds(n_modes: int, n_betas: int) -> tuple[np.ndarray, np.ndarray]:
    p = 1 + n_modes + n_betas + 3
    lo = np.zeros(p)
    hi = np.full(p, np.inf)
    hi[1 : 1 + n_modes] = 1.0
    return lo, hi


# --- scalar pieces ---------------------------------------------------------


def competition_share(params: FactorModelParams, bin: int, delta: Sequence[float]) -> float:
    """Share P_d of trips in bin ``bin`` exposed to e-scooter competition.

    ``delta`` is the sequence of representative distances (e.g. ``scheme.delta``).
    """
    b = params.distance_betas[0] if params.beta_mode == SHARED else params.distance_betas[bin]
    return min(1.0, b / delta[bin])


def access_fraction(params: FactorModelParams, profile: TransitAccessProfile) -> float:
    b0, b1, b2 = params.access_coeffs
    return min(1.0, max(0.0, b0 + b1 * profile.access_time + b2 * profile.egress_time))


# --- vectorized model ------------------------------------------------------


@dataclass
class FactorData:
    """Inputs aligned on the trip matrix's zone order."""

    zones: tuple[ZoneId, ...]
    modes: tuple[str, ...]
    delta: np.ndarray  # (D,)
    counts: np.ndarray  # (M, n, D)
    transit: int | None  # index of the public-transit mode
    times: np.ndarray  # (n, 3): 1, access hr, egress hr
    has_access: np.ndarray  # (n,) bool
    target: np.ndarray | None = None  # forecast demand (n,)

    @property
    def n_zones(self) -> int:
        return len(self.zones)

    def take(self, idx) -> "FactorData":
        idx = np.asarray(idx)
        return replace(
            self,
            zones=tuple(self.zones[i] for i in idx),
            counts=self.counts[:, idx, :],
            times=self.times[idx],
            has_access=self.has_access[idx],
            target=None if self.target is None else self.target[idx],
        )


def build_data(
    trips: ModalTripMatrix,
    access: Sequence[TransitAccessProfile] | None = None,
    forecasts: Sequence[DemandForecast] | None = None,
    transit_mode: str = TRANSIT,
) -> FactorData:
    zone_ids = [z.id for z in trips.zones]
    zset = set(zone_ids)
    times = np.zeros((len(zone_ids), 3))
    times[:, 0] = 1.0
    has_access = np.zeros(len(zone_ids), dtype=bool)
    if access is not None:
        amap = {a.zone.id: a for a in access}
        extra = sorted(set(amap) - zset)
        if extra:
            raise InputError(f"access profiles for zone(s) absent from the trip matrix: {', '.join(extra)}")
        for i, z in enumerate(zone_ids):
            if z in amap:
                times[i, 1] = amap[z].access_time
                times[i, 2] = amap[z].egress_time
                has_access[i] = True
    target = None
    if forecasts is not None:
        fmap = {f.zone.id: f.trips for f in forecasts}
        if set(fmap) != zset:
            only_f = sorted(set(fmap) - zset)
            only_t = sorted(zset - set(fmap))
            raise InputError(
                "forecast and trip-matrix zone sets differ"
                + (f"; forecast only: {', '.join(only_f[:10])}" if only_f else "")
                + (f"; trips only: {', '.join(only_t[:10])}" if only_t else "")
            )
        target = np.array([fmap[z] for z in zone_ids])
    transit = trips.modes.index(transit_mode) if transit_mode in trips.modes else None
    return FactorData(tuple(trips.zones), tuple(trips.modes), np.asarray(trips.scheme.delta, dtype=float),
                      np.asarray(trips.counts, dtype=float), transit, times, has_access, target)


class FactorModel:
    """Vectorized evaluation of predictions, objective, Jacobian and gradient."""

    def __init__(self, data: FactorData, n_betas: int = 1):
        self.data = data
        self.n_betas = n_betas
        self.M = len(data.modes)
        D = len(data.delta)
        if n_betas not in (1, D):
            raise InputError(f"number of distance betas must be 1 or {D}, got {n_betas}")
        self.p = 1 + self.M + n_betas + 3
        self.lower, self.upper = bounds(self.M, n_betas)
        if data.transit is None:
            self.transit_counts = np.zeros(data.counts.shape[1:])
        else:
            self.transit_counts = data.counts[data.transit]

    def split(self, theta):
        M, nb = self.M, self.n_betas
        return theta[0], theta[1 : 1 + M], theta[1 + M : 1 + M + nb], theta[1 + M + nb :]

    def shares(self, beta):
        ratio = np.broadcast_to(beta, self.data.delta.shape) / self.data.delta
        return np.minimum(1.0, ratio), ratio < 1.0

    def access_shares(self, b):
        raw = self.data.times @ b
        return np.clip(raw, 0.0, 1.0), raw < 1.0

    def components(self, theta):
        """Direct trips (M, n, D) and access trips (n, D) replaced by e-scooters."""
        C, F, beta, b = self.split(theta)
        P, _ = self.shares(beta)
        Fp, _ = self.access_shares(b)
        direct = F[:, None, None] * P[None, None, :] * self.data.counts
        access = (1.0 - P)[None, :] * Fp[:, None] * self.transit_counts
        return direct, access

    def predict(self, theta) -> np.ndarray:
        direct, access = self.components(theta)
        return theta[0] + direct.sum(axis=(0, 2)) + access.sum(axis=1)

    def residuals(self, theta) -> np.ndarray:
        return self.data.target - self.predict(theta)

    def objective(self, theta) -> float:
        r = self.residuals(theta)
        return float(r @ r)

    def jacobian(self, theta) -> np.ndarray:
        """d R_sub / d theta, shape (n, p); zero derivative where a clamp is engaged."""
        C, F, beta, b = self.split(theta)
        N, Nt = self.data.counts, self.transit_counts
        P, p_free = self.shares(beta)
        Fp, a_free = self.access_shares(b)
        n = N.shape[1]
        J = np.empty((n, self.p))
        J[:, 0] = 1.0
        J[:, 1 : 1 + self.M] = np.einsum("mid,d->im", N, P)
        dP = np.where(p_free, 1.0 / self.data.delta, 0.0)
        per_bin = (np.einsum("m,mid->id", F, N) - Fp[:, None] * Nt) * dP[None, :]
        if self.n_betas == 1:
            J[:, 1 + self.M] = per_bin.sum(axis=1)
        else:
            J[:, 1 + self.M : 1 + self.M + self.n_betas] = per_bin
        exposed = Nt @ (1.0 - P)
        J[:, 1 + self.M + self.n_betas :] = (a_free * exposed)[:, None] * self.data.times
        return J

    def gradient(self, theta) -> np.ndarray:
        return -2.0 * self.jacobian(theta).T @ self.residuals(theta)

    def projected_gradient(self, theta, g=None) -> np.ndarray:
        if g is None:
            g = self.gradient(theta)
        return theta - np.clip(theta - g, self.lower, self.upper)


# --- public prediction API -------------------------------------------------


@dataclass(frozen=True)
class SubstitutionPrediction:
    zone: ZoneId
    total: float
    breakdown: np.ndarray  # (M, D) direct trips replaced, by mode and bin
    access_breakdown: np.ndarray  # (D,) transit access/egress trips replaced
    constant_share: float
    modes: tuple[str, ...] = ()
    access_fraction: float = 0.0
    access_hours: float | None = None  # access + egress time of the zone, None when unknown


def predict_substitution(
    params: FactorModelParams,
    trips: ModalTripMatrix,
    access: Sequence[TransitAccessProfile] | None,
    transit_mode: str = TRANSIT,
) -> list[SubstitutionPrediction]:
    data = build_data(trips, access, None, transit_mode)
    if any(params.access_coeffs):
        if data.transit is None:
            raise InputError(f"access coefficients are nonzero but mode {transit_mode!r} is absent")
        missing = [z.id for z, ok in zip(data.zones, data.has_access) if not ok]
        if missing:
            raise InputError(f"missing access profile for zone(s): {', '.join(missing[:10])}")
    n_betas = len(params.distance_betas)
    model = FactorModel(data, n_betas)
    theta = pack(params, trips.modes)
    direct, acc = model.components(theta)
    Fp, _ = model.access_shares(model.split(theta)[3])
    out = []
    for i, z in enumerate(data.zones):
        total = params.constant + direct[:, i, :].sum() + acc[i].sum()
        out.append(
            SubstitutionPrediction(
                zone=z,
                total=float(total),
                breakdown=direct[:, i, :].copy(),
                access_breakdown=acc[i].copy(),
                constant_share=params.constant,
                modes=tuple(trips.modes),
                access_fraction=float(Fp[i]),
                access_hours=float(data.times[i, 1] + data.times[i, 2]) if data.has_access[i] else None,
            )
        )
    return out


# --- solvers ---------------------------------------------------------------


@dataclass
class SolverConfig:
    """Settings of the bounded least-squares calibration.

    ``method`` is ``"lm"`` (active-set projected Levenberg-Marquardt) or
    ``"pgd"`` (projected gradient with Barzilai-Borwein steps and Armijo
    backtracking).
    """

    method: str = "lm"
    beta_mode: str = SHARED
    max_iter: int = 10_000
    gtol: float = 1e-8
    ftol: float = 1e-12
    stall_window: int = 5
    n_starts: int = 8
    seed: int = 0
    transit_mode: str = TRANSIT

    def __post_init__(self):
        if self.method not in ("lm", "pgd"):
            raise InputError(f"unknown solver method {self.method!r}")
        if self.beta_mode not in (SHARED, PER_BIN):
            raise InputError(f"beta mode must be {SHARED!r} or {PER_BIN!r}")


@dataclass
class SolveTrace:
    theta: np.ndarray
    objective: float
    iterations: int
    converged: bool
    gradient_norm: float
    reason: str


class _Monitor:
    def __init__(self, model: FactorModel, cfg: SolverConfig):
        self.model, self.cfg = model, cfg
        self.history: list[float] = []

    def check(self, theta, Z, g) -> tuple[bool, str, float]:
        """Return (stop, reason, projected-gradient norm)."""
        pg = float(np.linalg.norm(self.model.projected_gradient(theta, g)))
        self.history.append(Z)
        if pg <= self.cfg.gtol * (1.0 + abs(Z)):
            return True, "gradient", pg
        w = self.cfg.stall_window
        if len(self.history) > w:
            old = self.history[-1 - w]
            if old - Z <= self.cfg.ftol * max(abs(old), np.finfo(float).tiny):
                return True, "stalled", pg
        return False, "", pg


def _finite_or_raise(Z, theta, model):
    if not math.isfinite(Z):
        names = parameter_names(model.data.modes, model.n_betas)
        dump = ", ".join(f"{n}={v:.6g}" for n, v in zip(names, theta))
        raise NumericalError(f"non-finite objective at iterate: {dump}")


def solve_lm(model: FactorModel, theta0, cfg: SolverConfig, free_mask=None) -> SolveTrace:
    lo, hi = model.lower, model.upper
    theta = np.clip(np.asarray(theta0, dtype=float), lo, hi)
    fixed = np.zeros(model.p, dtype=bool) if free_mask is None else ~free_mask
    mon = _Monitor(model, cfg)
    mu = 1e-3
    for it in range(cfg.max_iter + 1):
        r = model.residuals(theta)
        Z = float(r @ r)
        _finite_or_raise(Z, theta, model)
        J = model.jacobian(theta)
        J[:, fixed] = 0.0
        g = -2.0 * J.T @ r
        stop, reason, pg = mon.check(theta, Z, g)
        if stop or it == cfg.max_iter:
            return SolveTrace(theta, Z, it, stop, pg, reason or "max_iter")
        blocked = fixed | ((theta <= lo) & (g > 0)) | ((theta >= hi) & (g < 0))
        free = ~blocked
        Jf = J[:, free]
        A = Jf.T @ Jf
        rhs = Jf.T @ r
        d = np.diag(A).copy()
        d = np.maximum(d, 1e-12 * max(d.max(initial=0.0), 1.0))
        for _ in range(60):
            try:
                step = np.linalg.solve(A + mu * np.diag(d), rhs)
            except np.linalg.LinAlgError:
                mu *= 4.0
                continue
            trial = theta.copy()
            trial[free] += step
            trial = np.clip(trial, lo, hi)
            Zt = model.objective(trial)
            if math.isfinite(Zt) and Zt < Z:
                theta = trial
                mu = max(mu / 3.0, 1e-15)
                break
            mu *= 4.0
        else:
            return SolveTrace(theta, Z, it, True, pg, "stalled")
    raise AssertionError("unreachable")


def solve_pgd(model: FactorModel, theta0, cfg: SolverConfig, free_mask=None) -> SolveTrace:
    lo, hi = model.lower, model.upper
    theta = np.clip(np.asarray(theta0, dtype=float), lo, hi)
    fixed = np.zeros(model.p, dtype=bool) if free_mask is None else ~free_mask
    mon = _Monitor(model, cfg)
    prev = None
    alpha = None
    for it in range(cfg.max_iter + 1):
        Z = model.objective(theta)
        _finite_or_raise(Z, theta, model)
        g = model.gradient(theta)
        g[fixed] = 0.0
        stop, reason, pg = mon.check(theta, Z, g)
        if stop or it == cfg.max_iter:
            return SolveTrace(theta, Z, it, stop, pg, reason or "max_iter")
        if prev is not None:
            s = theta - prev[0]
            y = g - prev[1]
            sy = float(s @ y)
            alpha = float(s @ s) / sy if sy > 0 else alpha * 2.0
        if alpha is None or not math.isfinite(alpha) or alpha <= 0:
            alpha = 1.0 / max(float(np.linalg.norm(g)), 1e-300)
        t = alpha
        for _ in range(100):
            trial = np.clip(theta - t * g, lo, hi)
            Zt = model.objective(trial)
            if math.isfinite(Zt) and Zt <= Z + 1e-4 * float(g @ (trial - theta)):
                break
            t *= 0.5
        else:
            return SolveTrace(theta, Z, it, True, pg, "stalled")
        prev = (theta, g)
        theta = trial
    raise AssertionError("unreachable")


SOLVERS = {"lm": solve_lm, "pgd": solve_pgd}


@dataclass
class FitResult:
    params: FactorModelParams
    objective: float
    residuals: dict[str, float]
    iterations: int
    converged: bool
    gradient_norm: float
    stop_reason: str = ""
    initial_objective: float = float("nan")
    start_index: int = 0
    starts: list[dict] = field(default_factory=list)
    config: SolverConfig = field(default_factory=SolverConfig)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "objective": self.objective,
            "initial_objective": self.initial_objective,
            "residuals": self.residuals,
            "convergence": {
                "converged": self.converged,
                "iterations": self.iterations,
                "gradient_norm": self.gradient_norm,
                "stop_reason": self.stop_reason,
                "start_index": self.start_index,
                "starts": self.starts,
            },
            "solver": asdict(self.config),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        conv = d["convergence"]
        return cls(
            params=FactorModelParams.from_dict(d["params"]),
            objective=d["objective"],
            residuals=dict(d["residuals"]),
            iterations=conv["iterations"],
            converged=conv["converged"],
            gradient_norm=conv["gradient_norm"],
            stop_reason=conv.get("stop_reason", ""),
            initial_objective=d.get("initial_objective", float("nan")),
            start_index=conv.get("start_index", 0),
            starts=conv.get("starts", []),
            config=SolverConfig(**d["solver"]),
        )


# Ranges of the random feasible multi-start draws.
START_F_MAX = 0.1
START_ACCESS_MAX = (0.01, 0.05, 0.05)


def initial_theta(model: FactorModel) -> np.ndarray:
    """Deterministic start: C at the mean forecast, fractions zero, beta at a fifth of the shortest bin.

    With zero fractions and access coefficients the predictions equal C, so
    this start has the objective of the constant-only model.
    """
    theta = np.zeros(model.p)
    theta[0] = float(np.mean(model.data.target))
    theta[1 + model.M : 1 + model.M + model.n_betas] = 0.2 * model.data.delta[0]
    return theta


def random_theta(model: FactorModel, rng: np.random.Generator) -> np.ndarray:
    theta = np.zeros(model.p)
    theta[0] = rng.uniform(0.0, 2.0 * float(np.mean(model.data.target)))
    theta[1 : 1 + model.M] = rng.uniform(0.0, START_F_MAX, model.M)
    theta[1 + model.M : 1 + model.M + model.n_betas] = rng.uniform(0.0, model.data.delta[0], model.n_betas)
    theta[1 + model.M + model.n_betas :] = rng.uniform(0.0, START_ACCESS_MAX)
    return theta


def _free_mask(model: FactorModel) -> np.ndarray:
    free = np.ones(model.p, dtype=bool)
    if model.data.transit is None:
        free[-3:] = False
    return free


def _result(model: FactorModel, trace: SolveTrace, cfg: SolverConfig, **extra) -> FitResult:
    params = unpack(trace.theta, model.data.modes, model.n_betas)
    resid = model.residuals(trace.theta)
    return FitResult(
        params=params,
        objective=float(resid @ resid),
        residuals={z.id: float(r) for z, r in zip(model.data.zones, resid)},
        iterations=trace.iterations,
        converged=trace.converged,
        gradient_norm=trace.gradient_norm,
        stop_reason=trace.reason,
        config=cfg,
        **extra,
    )


def fit(
    forecasts: Sequence[DemandForecast],
    trips: ModalTripMatrix,
    access: Sequence[TransitAccessProfile] | None,
    config: SolverConfig | None = None,
) -> FitResult:
    """Calibrate the model by minimizing the squared gap to forecast demand.

    Runs the solver from the deterministic start and ``n_starts`` seeded
    random feasible starts; the lowest objective wins, ties within 1e-9
    going to the earliest start.
    """
    cfg = config or SolverConfig()
    data = build_data(trips, access, forecasts, cfg.transit_mode)
    if data.n_zones < 2:
        raise InputError("need at least two zones to fit")
    if data.transit is not None and not data.has_access.all():
        missing = [z.id for z, ok in zip(data.zones, data.has_access) if not ok]
        raise InputError(f"missing access profile for zone(s): {', '.join(missing[:10])}")
    n_betas = 1 if cfg.beta_mode == SHARED else len(data.delta)
    model = FactorModel(data, n_betas)
    free = _free_mask(model)
    solver = SOLVERS[cfg.method]
    rng = np.random.default_rng(cfg.seed)
    starts = [initial_theta(model)] + [random_theta(model, rng) for _ in range(cfg.n_starts)]
    starts = [np.where(free, s, 0.0) for s in starts]
    z0 = model.objective(starts[0])
    traces = [solver(model, s, cfg, free) for s in starts]
    zs = np.array([t.objective for t in traces])
    best = float(zs.min())
    idx = int(np.nonzero(zs <= best + 1e-9 * max(1.0, abs(best)))[0][0])
    summary = [
        {"objective": t.objective, "iterations": t.iterations, "converged": t.converged, "stop_reason": t.reason}
        for t in traces
    ]
    return _result(model, traces[idx], cfg, initial_objective=z0, start_index=idx, starts=summary)


def refit(
    data: FactorData, theta0: np.ndarray, n_betas: int, cfg: SolverConfig
) -> SolveTrace:
    """Single-start fit on prepared data (used for bootstrap replicates)."""
    model = FactorModel(data, n_betas)
    return SOLVERS[cfg.method](model, theta0, cfg, _free_mask(model))


# --- bootstrap -------------------------------------------------------------


@dataclass
class BootstrapSummary:
    names: list[str]
    point: list[float]
    std_error: list[float]
    lower: list[float]
    upper: list[float]
    replicates: int
    seed: int
    ci_level: float
    n_failed: int = 0
    samples: list[list[float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BootstrapSummary":
        return cls(**d)

    def table(self) -> str:
        pct = f"{100 * self.ci_level:g}%"
        lines = [
            f"{'Variable':<16}{'Coefficient':>12}{'Bootstrap SE':>14}   CI ({pct}) lower    upper",
        ]
        for n, p, s, lo, hi in zip(self.names, self.point, self.std_error, self.lower, self.upper):
            lines.append(f"{n:<16}{p:>12.3f}{s:>14.3f}{lo:>17.3f}{hi:>9.3f}")
        lines.append(f"B = {self.replicates} ({self.n_failed} failed), seed = {self.seed}")
        return "\n".join(lines)


MAX_FAILURE_SHARE = 0.25


def _replicate(args):
    data, theta0, n_betas, cfg, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    idx = rng.integers(0, data.n_zones, data.n_zones)
    try:
        tr = refit(data.take(idx), theta0, n_betas, cfg)
    except NumericalError as exc:
        return None, str(exc)
    if not tr.converged:
        return None, f"no convergence after {tr.iterations} iterations"
    return tr.theta, ""


def bootstrap(
    fitted: FitResult,
    forecasts: Sequence[DemandForecast],
    trips: ModalTripMatrix,
    access: Sequence[TransitAccessProfile] | None,
    B: int = 40,
    seed: int = 0,
    ci_level: float = 0.90,
    workers: int = 1,
) -> BootstrapSummary:
    """Zone-resampling bootstrap with percentile intervals.

    Replicate ``b`` draws its resample from child ``b`` of ``SeedSequence(seed)``
    and refits from the full-data solution, so the summary does not depend on
    ``workers``.
    """
    if B < 2:
        raise InputError("bootstrap needs at least 2 replicates")
    if not 0 < ci_level < 1:
        raise InputError("ci_level must lie in (0, 1)")
    cfg = fitted.config
    data = build_data(trips, access, forecasts, cfg.transit_mode)
    n_betas = len(fitted.params.distance_betas)
    theta0 = pack(fitted.params, data.modes)
    children = np.random.SeedSequence(seed).spawn(B)
    jobs = [(data, theta0, n_betas, cfg, c) for c in children]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, jobs))
    else:
        results = [_replicate(j) for j in jobs]
    ok = [th for th, _ in results if th is not None]
    failed = [(b, msg) for b, (th, msg) in enumerate(results) if th is None]
    if failed:
        warnings.warn(f"{len(failed)} of {B} bootstrap replicates failed and were excluded", stacklevel=2)
        for b, msg in failed:
            log.warning("bootstrap replicate %d excluded: %s", b, msg)
    if len(failed) > MAX_FAILURE_SHARE * B:
        raise NumericalError(f"{len(failed)} of {B} bootstrap replicates failed (more than 25%)")
    S = np.array(ok)
    # rounding keeps e.g. ci_level=0.9 at exactly the 5th/95th percentiles
    q_lo = round(50.0 * (1.0 - ci_level), 10)
    q_hi = round(50.0 * (1.0 + ci_level), 10)
    lower = np.percentile(S, q_lo, axis=0)
    upper = np.percentile(S, q_hi, axis=0)
    # centering on the first replicate makes identical replicates give exactly zero spread
    se = (S - S[0]).std(axis=0, ddof=1) if len(S) > 1 else np.zeros(S.shape[1])
    labels = [f"{lo:g}-{hi:g}" for lo, hi in zip(trips.scheme.edges, trips.scheme.edges[1:])]
    return BootstrapSummary(
        names=parameter_names(data.modes, n_betas, labels),
        point=theta0.tolist(),
        std_error=se.tolist(),
        lower=lower.tolist(),
        upper=upper.tolist(),
        replicates=B,
        seed=seed,
        ci_level=ci_level,
        n_failed=len(failed),
        samples=S.tolist(),
    )
