"""Shared domain types: zones, demographic profiles, distance bins, trip matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


class InputError(ValueError):
    """Bad or inconsistent input data (CLI exit code 1)."""


class NumericalError(RuntimeError):
    """Numerical failure: rank deficiency, non-finite objective, non-convergence (exit code 2)."""


@dataclass(frozen=True)
class ZoneId:
    id: str
    system: str = "taz"

    def __post_init__(self):
        if not self.id:
            raise InputError("zone id must be non-empty")

    def _check(self, other):
        if not isinstance(other, ZoneId):
            return NotImplemented
        if other.system != self.system:
            raise TypeError(f"cannot compare zones from systems {self.system!r} and {other.system!r}")
        return None

    def __lt__(self, other):
        bad = self._check(other)
        return bad if bad is NotImplemented else self.id < other.id

    def __le__(self, other):
        bad = self._check(other)
        return bad if bad is NotImplemented else self.id <= other.id

    def __gt__(self, other):
        bad = self._check(other)
        return bad if bad is NotImplemented else self.id > other.id

    def __ge__(self, other):
        bad = self._check(other)
        return bad if bad is NotImplemented else self.id >= other.id

    def __str__(self):
        return self.id


# Fields that may enter a log transform in the demand model.
LOG_FIELDS = (
    "density",
    "median_age",
    "age_ratio_20_40",
    "labor_rate",
    "median_income",
    "health_insurance_rate",
)

PROFILE_FIELDS = (
    "population",
    "area",
    "density",
    "median_age",
    "age_ratio_20_40",
    "labor_rate",
    "median_income",
    "health_insurance_rate",
    "unemployment_rate",
)

DENSITY_RTOL = 0.005


@dataclass(frozen=True)
class ZoneProfile:
    """Demographics of one zone.

    ``density`` is derived from population and area when omitted.  Rates
    (labor, health insurance, unemployment) are in percent.
    """

    zone: ZoneId
    population: float
    area: float
    median_age: float
    age_ratio_20_40: float
    labor_rate: float
    median_income: float
    health_insurance_rate: float
    unemployment_rate: float
    density: float = float("nan")

    def __post_init__(self):
        if math.isnan(self.density) and self.area > 0:
            object.__setattr__(self, "density", self.population / self.area)
        problems = profile_problems({name: getattr(self, name) for name in PROFILE_FIELDS})
        if problems:
            raise InputError(f"zone {self.zone}: " + "; ".join(problems))

    def value(self, name: str) -> float:
        if name not in PROFILE_FIELDS:
            raise KeyError(f"unknown profile field {name!r}")
        return getattr(self, name)

    def to_dict(self) -> dict:
        d = {"zone_id": self.zone.id, "system": self.zone.system}
        for name in PROFILE_FIELDS:
            d[name] = getattr(self, name)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ZoneProfile":
        kw = {name: float(d[name]) for name in PROFILE_FIELDS if name in d}
        return cls(zone=ZoneId(str(d["zone_id"]), d.get("system", "taz")), **kw)


def profile_problems(v: Mapping[str, float]) -> list[str]:
    """Return human-readable invariant violations of profile field values (empty when valid)."""
    out = [f"non-finite field: {name}" for name in PROFILE_FIELDS if not math.isfinite(v[name])]
    if out:
        return out
    if v["population"] < 0:
        out.append("negative field: population")
    if v["area"] <= 0:
        out.append("nonpositive field: area")
    for name in LOG_FIELDS:
        if v[name] <= 0:
            out.append(f"nonpositive field: {name}")
    if v["age_ratio_20_40"] > 1:
        out.append("age_ratio_20_40 exceeds 1")
    for name in ("labor_rate", "health_insurance_rate"):
        if v[name] > 100:
            out.append(f"{name} exceeds 100")
    if not 0 <= v["unemployment_rate"] <= 100:
        out.append("unemployment_rate outside [0, 100]")
    if v["area"] > 0 and v["population"] > 0 and v["density"] > 0:
        implied = v["population"] / v["area"]
        if abs(v["density"] - implied) > DENSITY_RTOL * implied:
            out.append(f"density {v['density']} inconsistent with population/area {implied:.6g}")
    return out


@dataclass(frozen=True)
class DistanceBinScheme:
    """Contiguous half-open distance bins ``[lo, hi)`` in miles.

    ``delta`` holds the representative trip distance of each bin; it defaults
    to the bin midpoint.
    """

    edges: tuple[float, ...]
    delta: tuple[float, ...] = ()

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        object.__setattr__(self, "edges", edges)
        if len(edges) < 2:
            raise InputError("a distance scheme needs at least one bin")
        if edges[0] != 0.0:
            raise InputError("first bin must start at 0")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise InputError("bin edges must be strictly increasing")
        if not self.delta:
            delta = tuple((a + b) / 2 for a, b in zip(edges, edges[1:]))
        else:
            delta = tuple(float(x) for x in self.delta)
        if len(delta) != len(edges) - 1:
            raise InputError("need one representative distance per bin")
        for lo, hi, dd in zip(edges, edges[1:], delta):
            if not lo < dd < hi:
                raise InputError(f"representative distance {dd} not strictly inside [{lo}, {hi})")
        object.__setattr__(self, "delta", delta)

    @classmethod
    def uniform(cls, n_bins: int = 14, width: float = 1.0, delta: Sequence[float] = ()) -> "DistanceBinScheme":
        return cls(tuple(i * width for i in range(n_bins + 1)), tuple(delta))

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1

    @property
    def bins(self) -> list[tuple[float, float]]:
        return list(zip(self.edges, self.edges[1:]))

    @property
    def upper(self) -> float:
        return self.edges[-1]

    def bin_of(self, distance: float) -> int:
        """Index of the bin containing ``distance``; ValueError when outside."""
        if not (0 <= distance < self.upper):
            raise ValueError(f"distance {distance} out of scheme [0, {self.upper})")
        return int(np.searchsorted(self.edges, distance, side="right")) - 1

    def labels(self) -> list[str]:
        return [f"{lo:g}-{hi:g}" for lo, hi in self.bins]

    def to_dict(self) -> dict:
        return {"edges": list(self.edges), "delta": list(self.delta)}

    @classmethod
    def from_dict(cls, d: dict) -> "DistanceBinScheme":
        return cls(tuple(d["edges"]), tuple(d.get("delta", ())))


DEFAULT_SCHEME = DistanceBinScheme.uniform(14)

# Modes of the household survey plus the bike-share system, in reporting order.
DEFAULT_MODES = ("carpool", "transit", "taxi", "bike", "walk", "auto", "citibike")
TRANSIT = "transit"


@dataclass(frozen=True)
class ModalTripMatrix:
    """Trips by mode, zone and distance bin (``counts[m, i, d]``).

    Construction does not validate counts; call :func:`validate_trip_matrix`.
    """

    modes: tuple[str, ...]
    zones: tuple[ZoneId, ...]
    scheme: DistanceBinScheme
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "zones", tuple(self.zones))
        counts = np.array(self.counts, dtype=float)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (len(self.modes), len(self.zones), self.scheme.n_bins)

    def mode_index(self, mode: str) -> int:
        return self.modes.index(mode)

    def marginals(self) -> np.ndarray:
        """Per (mode, zone) totals over distance bins."""
        return self.counts.sum(axis=2)

    def take_zones(self, idx: Iterable[int]) -> "ModalTripMatrix":
        idx = list(idx)
        return ModalTripMatrix(self.modes, tuple(self.zones[i] for i in idx), self.scheme, self.counts[:, idx, :])

    def with_counts(self, counts) -> "ModalTripMatrix":
        return ModalTripMatrix(self.modes, self.zones, self.scheme, counts)

    def to_dict(self) -> dict:
        return {
            "modes": list(self.modes),
            "zones": [[z.id, z.system] for z in self.zones],
            "scheme": self.scheme.to_dict(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModalTripMatrix":
        return cls(
            tuple(d["modes"]),
            tuple(ZoneId(z, s) for z, s in d["zones"]),
            DistanceBinScheme.from_dict(d["scheme"]),
            np.array(d["counts"], dtype=float),
        )

    def __eq__(self, other):
        if not isinstance(other, ModalTripMatrix):
            return NotImplemented
        return (
            self.modes == other.modes
            and self.zones == other.zones
            and self.scheme == other.scheme
            and self.counts.shape == other.counts.shape
            and bool(np.array_equal(self.counts, other.counts))
        )

    __hash__ = None


@dataclass(frozen=True)
class Violation:
    kind: str  # "negative", "non-finite", "dimension"
    message: str
    index: tuple[str, str, int] | None = None


def validate_trip_matrix(matrix: ModalTripMatrix) -> list[Violation]:
    """Report-style check; an empty list means the matrix is valid."""
    counts = np.asarray(matrix.counts)
    expected = (len(matrix.modes), len(matrix.zones), matrix.scheme.n_bins)
    if counts.shape != expected:
        return [Violation("dimension", f"counts shape {counts.shape} != modes x zones x bins {expected}")]
    out = []
    for m, i, d in zip(*np.nonzero(~np.isfinite(counts))):
        key = (matrix.modes[m], matrix.zones[i].id, int(d))
        out.append(Violation("non-finite", f"non-finite count at {key}", key))
    with np.errstate(invalid="ignore"):
        neg = np.isfinite(counts) & (counts < 0)
    for m, i, d in zip(*np.nonzero(neg)):
        key = (matrix.modes[m], matrix.zones[i].id, int(d))
        out.append(Violation("negative", f"negative count {counts[m, i, d]} at {key}", key))
    return out


@dataclass(frozen=True)
class TransitAccessProfile:
    zone: ZoneId
    access_time: float  # hours
    egress_time: float  # hours

    MAX_HOURS = 2.0

    def __post_init__(self):
        for name in ("access_time", "egress_time"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0 <= v < self.MAX_HOURS):
                raise InputError(f"zone {self.zone}: {name}={v} must be in [0, {self.MAX_HOURS}) hours")

    def to_dict(self) -> dict:
        return {"zone_id": self.zone.id, "system": self.zone.system,
                "access_hr": self.access_time, "egress_hr": self.egress_time}

    @classmethod
    def from_dict(cls, d: dict) -> "TransitAccessProfile":
        return cls(ZoneId(str(d["zone_id"]), d.get("system", "taz")), float(d["access_hr"]), float(d["egress_hr"]))


@dataclass(frozen=True)
class DemandForecast:
    zone: ZoneId
    trips: float

    def __post_init__(self):
        if not (math.isfinite(self.trips) and self.trips >= 0):
            raise InputError(f"zone {self.zone}: forecast trips must be finite and >= 0, got {self.trips}")

    def to_dict(self) -> dict:
        return {"zone_id": self.zone.id, "system": self.zone.system, "trips": self.trips}

    @classmethod
    def from_dict(cls, d: dict) -> "DemandForecast":
        return cls(ZoneId(str(d["zone_id"]), d.get("system", "taz")), float(d["trips"]))
