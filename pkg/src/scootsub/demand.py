"""Log-log trip-generation model: OLS fit, diagnostics, collinearity screen,
backward selection, elasticities and zonal prediction.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg
from scipy.special import betainc, betaincc

from .core import PROFILE_FIELDS, DemandForecast, InputError, NumericalError, ZoneProfile

log = logging.getLogger(__name__)

INTERCEPT = "const"
RANK_RTOL = 1e-10


# --- distributions via the regularized incomplete beta ---------------------


def t_two_sided_p(t: float, df: float) -> float:
    """Two-sided p-value of Student's t: I_{df/(df+t^2)}(df/2, 1/2)."""
    if math.isnan(t):
        return float("nan")
    if math.isinf(t):
        return 0.0
    t2 = t * t
    if t2 < df:
        # near t = 0 the complementary form keeps full relative precision
        return float(betaincc(0.5, df / 2.0, t2 / (df + t2)))
    return float(betainc(df / 2.0, 0.5, df / (df + t2)))


def f_upper_p(f: float, df1: float, df2: float) -> float:
    """Upper-tail p-value of the F distribution: I_{df2/(df2+df1 f)}(df2/2, df1/2)."""
    if math.isnan(f):
        return float("nan")
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    if df1 * f < df2:
        return float(betaincc(df1 / 2.0, df2 / 2.0, df1 * f / (df2 + df1 * f)))
    return float(betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f)))


def fit_diagnostics(n: int, k: int, ssr: float, sse: float) -> dict:
    """Goodness-of-fit summary from the regression (explained) and residual sums of squares.

    ``k`` counts predictors excluding the intercept.
    """
    df_resid = n - k - 1
    r2 = ssr / (ssr + sse) if ssr + sse > 0 else float("nan")
    adj = 1.0 - (1.0 - r2) * (n - 1) / df_resid if df_resid > 0 else float("nan")
    if k > 0 and df_resid > 0:
        f = (ssr / k) / (sse / df_resid) if sse > 0 else float("inf")
        f_p = f_upper_p(f, k, df_resid)
    else:
        f, f_p = float("nan"), float("nan")
    rse = math.sqrt(sse / df_resid) if df_resid > 0 else float("nan")
    return {
        "n_obs": n,
        "df_model": k,
        "df_resid": df_resid,
        "ssr": ssr,
        "sse": sse,
        "r_squared": r2,
        "adj_r_squared": adj,
        "f_statistic": f,
        "f_p_value": f_p,
        "residual_std_error": rse,
    }


# --- model spec ------------------------------------------------------------


@dataclass(frozen=True)
class DemandModelSpec:
    """Response name and predictor terms.

    Each predictor is a product of profile fields written ``a*b``; every
    term enters the model as the natural log of the product.
    """

    predictors: tuple[str, ...]
    response: str = "trips"

    def __post_init__(self):
        preds = tuple(p.replace(" ", "") for p in self.predictors)
        object.__setattr__(self, "predictors", preds)
        if not preds:
            raise InputError("model spec needs at least one predictor")
        if len(set(preds)) != len(preds):
            raise InputError("duplicate predictor names in model spec")
        for p in preds:
            for f in p.split("*"):
                if f not in PROFILE_FIELDS:
                    raise InputError(f"predictor {p!r} uses unknown profile field {f!r}")

    def without(self, name: str) -> "DemandModelSpec":
        return DemandModelSpec(tuple(p for p in self.predictors if p != name), self.response)

    def to_dict(self) -> dict:
        return {"response": self.response, "predictors": list(self.predictors)}

    @classmethod
    def from_dict(cls, d: dict) -> "DemandModelSpec":
        return cls(tuple(d["predictors"]), d.get("response", "trips"))


# Final demand specification: density x age ratio, labor, income, health insurance.
DEFAULT_SPEC = DemandModelSpec(
    ("density*age_ratio_20_40", "labor_rate", "median_income", "health_insurance_rate")
)


def log_term(profile: ZoneProfile, term: str) -> float:
    total = 0.0
    for f in term.split("*"):
        try:
            v = profile.value(f)
        except KeyError:
            raise InputError(f"zone {profile.zone}: missing field {f}") from None
        if not (v > 0 and math.isfinite(v)):
            raise InputError(f"zone {profile.zone}: nonpositive field {f}={v} in log term")
        total += math.log(v)
    return total


def log_design(profiles: Sequence[ZoneProfile], predictors: Sequence[str]) -> np.ndarray:
    """Design matrix with an intercept column followed by log predictor terms."""
    X = np.ones((len(profiles), len(predictors) + 1))
    for i, p in enumerate(profiles):
        for j, term in enumerate(predictors):
            X[i, j + 1] = log_term(p, term)
    return X


# --- fitted model ----------------------------------------------------------


@dataclass
class DemandModel:
    spec: DemandModelSpec
    coefficients: dict[str, float]
    std_errors: dict[str, float]
    t_values: dict[str, float]
    p_values: dict[str, float]
    n_obs: int
    r_squared: float
    adj_r_squared: float
    f_statistic: float
    f_p_value: float
    ssr: float
    sse: float
    df_model: int
    df_resid: int
    residual_std_error: float
    zones: list[str] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return [INTERCEPT, *self.spec.predictors]

    def to_dict(self) -> dict:
        d = {
            "spec": self.spec.to_dict(),
            "coefficients": self.coefficients,
            "std_errors": self.std_errors,
            "t_values": self.t_values,
            "p_values": self.p_values,
            "diagnostics": {
                "n_obs": self.n_obs,
                "df_model": self.df_model,
                "df_resid": self.df_resid,
                "ssr": self.ssr,
                "sse": self.sse,
                "r_squared": self.r_squared,
                "adj_r_squared": self.adj_r_squared,
                "f_statistic": self.f_statistic,
                "f_p_value": self.f_p_value,
                "residual_std_error": self.residual_std_error,
            },
            "residuals": dict(zip(self.zones, self.residuals)),
            "metadata": self.metadata,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DemandModel":
        diag = d["diagnostics"]
        res = d.get("residuals", {})
        return cls(
            spec=DemandModelSpec.from_dict(d["spec"]),
            coefficients=dict(d["coefficients"]),
            std_errors=dict(d["std_errors"]),
            t_values=dict(d["t_values"]),
            p_values=dict(d["p_values"]),
            zones=list(res),
            residuals=list(res.values()),
            metadata=d.get("metadata", {}),
            **diag,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    @classmethod
    def from_json(cls, text: str) -> "DemandModel":
        return cls.from_dict(json.loads(text))

    def summary(self) -> str:
        lines = ["Variable                         Coefficient   Std. Error    t value     p-value"]
        for name in self.names:
            lines.append(
                f"{name:<30} {self.coefficients[name]:>13.4f} {self.std_errors[name]:>12.4f}"
                f" {self.t_values[name]:>10.3f} {self.p_values[name]:>11.4g}{_stars(self.p_values[name])}"
            )
        lines += [
            "",
            f"Residual standard error: {self.residual_std_error:.4g}    SSR (df): {self.ssr:.5g} ({self.df_model})",
            f"Multiple R-squared: {self.r_squared:.4f}           SSE (df): {self.sse:.5g} ({self.df_resid})",
            f"Adjusted R-squared: {self.adj_r_squared:.4f}           F-statistic: {self.f_statistic:.4g}",
            f"p-value: {self.f_p_value:.4g}",
            f"Observations: {self.n_obs}",
        ]
        return "\n".join(lines)


def _stars(p: float) -> str:
    if p < 0.0001:
        return " ***"
    if p < 0.01:
        return " **"
    if p < 0.05:
        return " *"
    return ""


def _response(profiles, observed: Mapping[str, float]):
    extra = sorted(set(observed) - {p.zone.id for p in profiles})
    if extra:
        raise InputError(f"observed trips for zone(s) without a profile: {', '.join(extra)}")
    rows = [p for p in profiles if p.zone.id in observed]
    skipped = len(profiles) - len(rows)
    if skipped:
        log.info("%d profile(s) have no observed trips and are left out of the fit", skipped)
    y = np.empty(len(rows))
    for i, p in enumerate(rows):
        v = observed[p.zone.id]
        if not (v > 0 and math.isfinite(v)):
            raise InputError(f"zone {p.zone}: nonpositive field trips={v} in log response")
        y[i] = math.log(v)
    return rows, y


def ols(X: np.ndarray, y: np.ndarray, names: Sequence[str]):
    """Least squares through a column-pivoted QR of the design.

    Returns (beta, unscaled covariance (X'X)^-1).  Raises NumericalError
    naming the first column found to be linearly dependent.
    """
    n, p = X.shape
    Q, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = RANK_RTOL * max(n, p) * diag[0] if p else 0.0
    deficient = np.nonzero(diag <= tol)[0]
    if deficient.size:
        col = names[piv[deficient[0]]]
        raise NumericalError(f"rank-deficient design: column {col!r} is linearly dependent on the others")
    beta_p = linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty(p)
    beta[piv] = beta_p
    Rinv = linalg.solve_triangular(R, np.eye(p))
    cov_p = Rinv @ Rinv.T
    cov = np.empty((p, p))
    cov[np.ix_(piv, piv)] = cov_p
    return beta, cov


def fit_ols(profiles: Sequence[ZoneProfile], observed: Mapping[str, float], spec: DemandModelSpec) -> DemandModel:
    rows, y = _response(profiles, observed)
    k = len(spec.predictors)
    n = len(rows)
    if n <= k + 1:
        raise InputError(f"need more than {k + 1} observations for {k} predictors, got {n}")
    X = log_design(rows, spec.predictors)
    names = [INTERCEPT, *spec.predictors]
    beta, cov = ols(X, y, names)
    fitted = X @ beta
    resid = y - fitted
    sse = float(resid @ resid)
    ssr = float(np.sum((fitted - y.mean()) ** 2))
    diag = fit_diagnostics(n, k, ssr, sse)
    sigma2 = sse / diag["df_resid"]
    se = np.sqrt(np.diag(cov) * sigma2)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = beta / se
    pv = [t_two_sided_p(float(ti), diag["df_resid"]) for ti in t]
    return DemandModel(
        spec=spec,
        coefficients=dict(zip(names, beta.tolist())),
        std_errors=dict(zip(names, se.tolist())),
        t_values=dict(zip(names, t.tolist())),
        p_values=dict(zip(names, pv)),
        zones=[p.zone.id for p in rows],
        residuals=resid.tolist(),
        **diag,
    )


# --- screening and selection -----------------------------------------------


@dataclass
class CollinearityReport:
    names: list[str]
    correlation: np.ndarray  # symmetric, NaN where a column is degenerate
    flagged: list[tuple[str, str, float]]
    degenerate: list[str]
    threshold: float

    def __str__(self):
        parts = [f"{a} ~ {b}: r = {r:+.3f}" for a, b, r in self.flagged]
        parts += [f"{d}: zero variance (degenerate)" for d in self.degenerate]
        return "\n".join(parts) if parts else f"no predictor pairs with |r| >= {self.threshold}"


def screen_collinearity(
    profiles: Sequence[ZoneProfile], spec: DemandModelSpec, threshold: float = 0.7, log_scale: bool = True
) -> CollinearityReport:
    """Flag predictor pairs whose Pearson correlation magnitude reaches ``threshold``.

    Correlations are computed on the log terms that enter the model unless
    ``log_scale`` is False.
    """
    if len(profiles) < 3:
        raise InputError("collinearity screen needs at least 3 observations")
    names = list(spec.predictors)
    if log_scale:
        A = log_design(profiles, names)[:, 1:]
    else:
        A = np.array([[math.prod(p.value(f) for f in term.split("*")) for term in names] for p in profiles])
    centered = A - A.mean(axis=0)
    norms = np.sqrt((centered**2).sum(axis=0))
    scale = np.maximum(np.abs(A).max(axis=0), 1.0)
    degenerate_mask = norms <= 1e-12 * scale * math.sqrt(len(profiles))
    safe = np.where(degenerate_mask, 1.0, norms)
    corr = (centered.T @ centered) / np.outer(safe, safe)
    corr = np.clip((corr + corr.T) / 2, -1.0, 1.0)
    corr[degenerate_mask, :] = np.nan
    corr[:, degenerate_mask] = np.nan
    flagged = []
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            r = corr[a, b]
            if not np.isnan(r) and abs(r) >= threshold:
                flagged.append((names[a], names[b], float(r)))
    return CollinearityReport(names, corr, flagged, [n for n, d in zip(names, degenerate_mask) if d], threshold)


@dataclass(frozen=True)
class Removal:
    step: int
    predictor: str
    p_value: float


def backward_select(
    profiles: Sequence[ZoneProfile],
    observed: Mapping[str, float],
    spec: DemandModelSpec,
    alpha: float = 0.05,
) -> tuple[DemandModel, list[Removal]]:
    """Drop the least significant predictor until every p-value is <= alpha.

    The intercept is never a candidate for removal.
    """
    trace: list[Removal] = []
    current = spec
    while True:
        model = fit_ols(profiles, observed, current)
        worst = max(current.predictors, key=lambda name: model.p_values[name])
        p = model.p_values[worst]
        if not p > alpha:
            return model, trace
        trace.append(Removal(len(trace) + 1, worst, p))
        log.info("backward selection: removing %s (p = %.4g)", worst, p)
        if len(current.predictors) == 1:
            raise InputError(f"no significant predictors at alpha = {alpha}")
        current = current.without(worst)


# --- elasticity and prediction ---------------------------------------------


def elasticity_effect(coefficient: float, pct_change: float = 0.01) -> float:
    """Multiplicative ridership factor for a relative change in one predictor."""
    if not pct_change > -1:
        raise ValueError("pct_change must exceed -1")
    return math.exp(coefficient * math.log1p(pct_change))


def predict(model: DemandModel, profiles: Sequence[ZoneProfile]) -> list[DemandForecast]:
    out = []
    const = model.coefficients[INTERCEPT]
    for p in profiles:
        eta = const + math.fsum(model.coefficients[t] * log_term(p, t) for t in model.spec.predictors)
        out.append(DemandForecast(p.zone, math.exp(eta)))
    return out
