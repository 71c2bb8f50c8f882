"""Substitution shares and fare revenue from fitted substitution predictions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import TRANSIT, DistanceBinScheme, InputError, ModalTripMatrix
from .factor import SubstitutionPrediction

DAYS_PER_YEAR = 365
DEFAULT_SPEED_MPH = 10.0
DEFAULT_AVG_DURATION_MIN = 12.0


@dataclass(frozen=True)
class FareSchedule:
    base: float = 1.00  # dollars per trip
    per_minute: float = 0.15  # dollars per minute

    def __post_init__(self):
        if self.base < 0 or self.per_minute < 0:
            raise InputError("fares must be nonnegative")

    def fare(self, minutes: float) -> float:
        return self.base + self.per_minute * minutes


def trip_duration(distance: float, speed: float = DEFAULT_SPEED_MPH) -> float:
    """Ride time in minutes for ``distance`` miles at ``speed`` mph."""
    if speed <= 0:
        raise ValueError("speed must be positive")
    if distance < 0:
        raise ValueError("distance must be nonnegative")
    return 60.0 * distance / speed


def market_revenue(total_trips: float, avg_duration: float, fare: FareSchedule = FareSchedule()) -> tuple[float, float]:
    """Daily and annual revenue of ``total_trips`` daily rides of ``avg_duration`` minutes."""
    if total_trips < 0 or avg_duration < 0:
        raise ValueError("trips and duration must be nonnegative")
    daily = total_trips * fare.fare(avg_duration)
    return daily, DAYS_PER_YEAR * daily


@dataclass
class RevenueReport:
    bins: list[str]
    modes: list[str]
    direct: np.ndarray  # (M, D) daily dollars from replaced direct trips
    access: np.ndarray  # (D,) daily dollars from replaced transit access/egress legs
    unattributed: float  # constant-share trips at the average ride duration
    assumptions: dict = field(default_factory=dict)

    @property
    def total_daily(self) -> float:
        return float(self.direct.sum() + self.access.sum() + self.unattributed)

    @property
    def total_annual(self) -> float:
        return DAYS_PER_YEAR * self.total_daily

    def by_distance(self) -> list[dict]:
        rows = []
        for d, label in enumerate(self.bins):
            row = {"bin": label, "access": float(self.access[d])}
            row["direct"] = {m: float(self.direct[k, d]) for k, m in enumerate(self.modes)}
            rows.append(row)
        return rows

    def mode_totals(self) -> dict[str, float]:
        out = {m: float(self.direct[k].sum()) for k, m in enumerate(self.modes)}
        out["access"] = float(self.access.sum())
        out["unattributed"] = self.unattributed
        return out

    def to_dict(self) -> dict:
        totals = self.mode_totals()
        return {
            "total_daily": self.total_daily,
            "total_annual": self.total_annual,
            "daily_by_component": totals,
            "annual_by_component": {k: DAYS_PER_YEAR * v for k, v in totals.items()},
            "by_distance": self.by_distance(),
            "assumptions": self.assumptions,
        }


def substitution_revenue(
    predictions: Sequence[SubstitutionPrediction],
    scheme: DistanceBinScheme,
    fare: FareSchedule = FareSchedule(),
    speed: float = DEFAULT_SPEED_MPH,
    avg_duration: float = DEFAULT_AVG_DURATION_MIN,
) -> RevenueReport:
    """Split daily fare revenue by distance bin into direct, access and unattributed parts.

    Direct rides last as long as riding the bin's representative distance.
    Access rides last the zone's access plus egress time, capped at the
    direct-ride duration of the same bin.  Constant-share trips earn the fare
    of an ``avg_duration`` ride.
    """
    if not predictions:
        return RevenueReport(scheme.labels(), [], np.zeros((0, scheme.n_bins)), np.zeros(scheme.n_bins), 0.0,
                             _assumptions(fare, speed, avg_duration))
    modes = list(predictions[0].modes)
    direct_minutes = np.array([trip_duration(x, speed) for x in scheme.delta])
    direct_fare = fare.base + fare.per_minute * direct_minutes
    direct = np.zeros((len(modes), scheme.n_bins))
    access = np.zeros(scheme.n_bins)
    unattributed = 0.0
    for p in predictions:
        if list(p.modes) != modes:
            raise InputError("predictions disagree on the mode list")
        direct += p.breakdown * direct_fare[None, :]
        if np.any(p.access_breakdown > 0):
            if p.access_hours is None:
                raise InputError(f"zone {p.zone}: access trips present but access/egress times missing")
            minutes = np.minimum(60.0 * p.access_hours, direct_minutes)
            access += p.access_breakdown * (fare.base + fare.per_minute * minutes)
        unattributed += p.constant_share * fare.fare(avg_duration)
    return RevenueReport(scheme.labels(), modes, direct, access, unattributed, _assumptions(fare, speed, avg_duration))


def _assumptions(fare, speed, avg_duration):
    return {"fare_base": fare.base, "fare_per_minute": fare.per_minute, "speed_mph": speed,
            "avg_duration_min": avg_duration, "days_per_year": DAYS_PER_YEAR}


@dataclass
class SubstitutionShares:
    """Fractions of existing trips replaced; ``None`` where there were no trips."""

    modes: list[str]
    zones: list[str]
    bins: list[str]
    cell: dict[tuple[str, str, str], float | None]
    by_mode_zone: dict[tuple[str, str], float | None]
    by_mode_bin: dict[tuple[str, str], float | None]

    def rows(self) -> list[tuple[str, str, str, float | None]]:
        """(mode, zone, bin, share) rows; ``all`` marks an aggregated dimension."""
        out = [(m, z, b, s) for (m, z, b), s in self.cell.items()]
        out += [(m, z, "all", s) for (m, z), s in self.by_mode_zone.items()]
        out += [(m, "all", b, s) for (m, b), s in self.by_mode_bin.items()]
        return out


def _ratio(num: float, den: float) -> float | None:
    return float(num / den) if den > 0 else None


def substitution_shares(
    predictions: Sequence[SubstitutionPrediction], trips: ModalTripMatrix, transit_mode: str = TRANSIT
) -> SubstitutionShares:
    """Share of each mode's trips replaced, per zone and bin and aggregated.

    Transit access/egress substitution is reported under ``<transit>_access``.
    """
    by_zone = {p.zone.id: p for p in predictions}
    zones = [z.id for z in trips.zones]
    missing = [z for z in zones if z not in by_zone]
    if missing:
        raise InputError(f"no prediction for zone(s): {', '.join(missing[:10])}")
    modes = list(trips.modes)
    labels = trips.scheme.labels()
    N = trips.counts
    direct = np.stack([by_zone[z].breakdown for z in zones], axis=1)  # (M, n, D)
    series = [(m, N[k], direct[k]) for k, m in enumerate(modes)]
    if transit_mode in modes:
        acc = np.stack([by_zone[z].access_breakdown for z in zones])  # (n, D)
        series.append((f"{transit_mode}_access", N[modes.index(transit_mode)], acc))
    cell, mz, mb = {}, {}, {}
    for name, base, sub in series:
        for i, z in enumerate(zones):
            for d, b in enumerate(labels):
                cell[(name, z, b)] = _ratio(sub[i, d], base[i, d])
            mz[(name, z)] = _ratio(sub[i].sum(), base[i].sum())
        for d, b in enumerate(labels):
            mb[(name, b)] = _ratio(sub[:, d].sum(), base[:, d].sum())
    return SubstitutionShares([s[0] for s in series], zones, labels, cell, mz, mb)
