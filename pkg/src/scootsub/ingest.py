"""CSV ingestion and population-weighted attribute transfer between zoning systems."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import (
    DEFAULT_MODES,
    PROFILE_FIELDS,
    DemandForecast,
    DistanceBinScheme,
    InputError,
    ModalTripMatrix,
    TransitAccessProfile,
    ZoneId,
    ZoneProfile,
    profile_problems,
)

log = logging.getLogger(__name__)

# canonical profile field -> default CSV column
PROFILE_COLUMNS = {
    "population": "population",
    "area": "area_sqmi",
    "median_age": "median_age",
    "age_ratio_20_40": "age_ratio_20_40",
    "labor_rate": "labor_rate",
    "median_income": "median_income",
    "health_insurance_rate": "health_insurance_rate",
    "unemployment_rate": "unemployment_rate",
}
OPTIONAL_PROFILE_COLUMNS = {"density": "density"}


@dataclass(frozen=True)
class RowError:
    line: int
    zone: str
    message: str

    def __str__(self):
        return f"line {self.line} (zone {self.zone}): {self.message}"


def _read_rows(path, required: Sequence[str]) -> tuple[list[str], list[tuple[int, dict]]]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise InputError(f"{path}: missing header row")
        header = [h.strip() for h in header]
        reader.fieldnames = header
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError(f"{path}: missing required column(s): {', '.join(missing)}")
        # line 1 is the header
        rows = [(n, row) for n, row in enumerate(reader, start=2)]
    return header, rows


def _float(raw: str | None, what: str) -> float:
    if raw is None or raw.strip() == "":
        raise ValueError(f"empty value for {what}")
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"cannot parse {what}={raw!r} as a number") from None


def load_zone_profiles(
    path, schema: Mapping[str, str] | None = None, system: str = "zip"
) -> tuple[list[ZoneProfile], list[RowError]]:
    """Read zone demographics.

    ``schema`` maps canonical field names (plus ``zone_id``) to CSV column
    names; unspecified fields use the default column names.  Returns the
    valid profiles and a list of row-level errors.  A missing required
    column is fatal.
    """
    cols = dict(PROFILE_COLUMNS)
    cols["zone_id"] = "zone_id"
    if schema:
        cols.update(schema)
    dens_col = (schema or {}).get("density", OPTIONAL_PROFILE_COLUMNS["density"])
    header, rows = _read_rows(path, list(cols.values()))
    profiles, errors = [], []
    seen = set()
    for line, row in rows:
        zone = (row.get(cols["zone_id"]) or "").strip()
        if not zone:
            errors.append(RowError(line, "?", "empty zone_id"))
            continue
        if zone in seen:
            errors.append(RowError(line, zone, "duplicate zone_id"))
            continue
        try:
            values = {f: _float(row[c], f) for f, c in cols.items() if f != "zone_id"}
            if dens_col in header and (row.get(dens_col) or "").strip():
                values["density"] = _float(row[dens_col], "density")
            elif values["area"] > 0:
                values["density"] = values["population"] / values["area"]
            else:
                values["density"] = float("nan")
        except ValueError as exc:
            errors.append(RowError(line, zone, str(exc)))
            continue
        problems = profile_problems(values)
        if problems:
            errors.extend(RowError(line, zone, p) for p in problems)
            continue
        seen.add(zone)
        profiles.append(ZoneProfile(zone=ZoneId(zone, system), **values))
    return profiles, errors


def write_zone_profiles(path, profiles: Sequence[ZoneProfile]) -> None:
    fields = ["zone_id"] + [PROFILE_COLUMNS.get(f, f) for f in PROFILE_FIELDS]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for p in profiles:
            w.writerow([p.zone.id] + [fmt(getattr(p, f)) for f in PROFILE_FIELDS])


def fmt(x: float) -> str:
    """Fixed 6-significant-digit CSV formatting."""
    return format(float(x), ".6g")


# --- crosswalk -------------------------------------------------------------


@dataclass(frozen=True)
class CrosswalkEntry:
    source_zone: ZoneId
    target_zone: ZoneId
    weight: float

    def __post_init__(self):
        if not (math.isfinite(self.weight) and self.weight >= 0):
            raise InputError(f"crosswalk weight {self.source_zone}->{self.target_zone} must be >= 0")


@dataclass(frozen=True)
class AttributeKind:
    name: str
    kind: str  # "extensive" sums under splitting, "intensive" averages

    def __post_init__(self):
        if self.kind not in ("extensive", "intensive"):
            raise ValueError(f"attribute kind must be extensive or intensive, got {self.kind!r}")


EXTENSIVE = ("population", "trips")
PROFILE_KINDS = {
    name: AttributeKind(name, "extensive" if name in EXTENSIVE else "intensive")
    for name in PROFILE_FIELDS
}

WEIGHT_SUM_TOL = 1e-6


def load_crosswalk(path, source_system: str = "zip", target_system: str = "taz") -> list[CrosswalkEntry]:
    _, rows = _read_rows(path, ["source_zone", "target_zone", "weight"])
    out = []
    for line, row in rows:
        try:
            w = _float(row["weight"], "weight")
            out.append(
                CrosswalkEntry(ZoneId(row["source_zone"].strip(), source_system),
                               ZoneId(row["target_zone"].strip(), target_system), w)
            )
        except (ValueError, InputError) as exc:
            raise InputError(f"{path}: line {line}: {exc}") from None
    return out


def normalized_weights(crosswalk: Sequence[CrosswalkEntry]) -> dict[str, list[tuple[str, float]]]:
    """Per-source list of (target, weight) with weights summing to one.

    Warns when a source's raw weights deviate from one by more than 1e-6.
    """
    by_source: dict[str, list[tuple[str, float]]] = defaultdict(list)
    for e in crosswalk:
        by_source[e.source_zone.id].append((e.target_zone.id, e.weight))
    out = {}
    for src, pairs in by_source.items():
        total = math.fsum(w for _, w in pairs)
        if total <= 0:
            raise InputError(f"crosswalk weights for source zone {src} sum to zero")
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            warnings.warn(f"crosswalk weights for source zone {src} sum to {total:.9g}; renormalizing",
                          stacklevel=3)
        out[src] = [(t, w / total) for t, w in pairs]
    return out


def crosswalk_transfer(
    values: Mapping[str, float],
    kind: AttributeKind,
    crosswalk: Sequence[CrosswalkEntry],
    population: Mapping[str, float] | None = None,
) -> dict[str, float]:
    """Transfer one attribute from source zones to target zones.

    Extensive values are split by weight and summed per target.  Intensive
    values become population-weighted means of the contributing sources,
    with ``population`` giving each source zone's population.  The mean of
    medians is an approximation of the target median; the true median cannot
    be recovered from aggregates.  A target whose contributing population is
    zero falls back to the plain weight-weighted mean.
    """
    weights = normalized_weights(crosswalk)
    missing = sorted(s for s in values if s not in weights)
    if missing:
        raise InputError(f"source zone(s) absent from crosswalk: {', '.join(missing)}")
    if kind.kind == "extensive":
        acc: dict[str, list[float]] = defaultdict(list)
        for src, v in values.items():
            for tgt, w in weights[src]:
                acc[tgt].append(w * v)
        return {t: math.fsum(parts) for t, parts in acc.items()}

    if population is None:
        raise InputError(f"intensive attribute {kind.name!r} needs source populations")
    num: dict[str, list[float]] = defaultdict(list)
    den: dict[str, list[float]] = defaultdict(list)
    wnum: dict[str, list[float]] = defaultdict(list)
    wden: dict[str, list[float]] = defaultdict(list)
    for src, v in values.items():
        if src not in population:
            raise InputError(f"no population for source zone {src}")
        for tgt, w in weights[src]:
            p = w * population[src]
            num[tgt].append(p * v)
            den[tgt].append(p)
            wnum[tgt].append(w * v)
            wden[tgt].append(w)
    out = {}
    for t in wden:
        d = math.fsum(den[t])
        if d > 0:
            out[t] = math.fsum(num[t]) / d
        else:
            out[t] = math.fsum(wnum[t]) / math.fsum(wden[t])
    return out


def transfer_profiles(
    profiles: Sequence[ZoneProfile], crosswalk: Sequence[CrosswalkEntry], target_system: str = "taz"
) -> list[ZoneProfile]:
    """Map whole profiles across zoning systems.

    Population is extensive; every other field is a population-weighted
    mean.  Target area is derived as population / density so the density
    invariant holds by construction.
    """
    pop = {p.zone.id: p.population for p in profiles}
    fields = {}
    for name in PROFILE_FIELDS:
        if name == "area":
            continue
        vals = {p.zone.id: getattr(p, name) for p in profiles}
        fields[name] = crosswalk_transfer(vals, PROFILE_KINDS[name], crosswalk, pop)
    out = []
    for tgt in sorted(fields["population"]):
        kw = {name: fields[name][tgt] for name in fields}
        if kw["population"] <= 0:
            log.warning("target zone %s receives no population; skipped", tgt)
            continue
        kw["area"] = kw["population"] / kw["density"]
        out.append(ZoneProfile(zone=ZoneId(tgt, target_system), **kw))
    return out


# --- trips, access, per-zone values ----------------------------------------


def load_trip_matrix(
    path,
    scheme: DistanceBinScheme,
    modes: Sequence[str] | None = None,
    zones: Sequence[str] | None = None,
    system: str = "taz",
) -> ModalTripMatrix:
    """Read ``mode, zone_id, distance_mi|bin_index, trips`` rows into a matrix.

    With ``modes=None`` the accepted labels are the default survey modes and
    the matrix keeps those that occur, in default order.  Zones listed in
    ``zones`` but absent from the file get zero trips.
    """
    header, rows = _read_rows(path, ["mode", "zone_id", "trips"])
    if "distance_mi" in header:
        dist_col = "distance_mi"
    elif "bin_index" in header:
        dist_col = "bin_index"
    else:
        raise InputError(f"{path}: need a distance_mi or bin_index column")
    allowed = tuple(modes) if modes is not None else DEFAULT_MODES

    parsed = []
    out_of_scheme, unknown, negative = [], set(), []
    for line, row in rows:
        mode = row["mode"].strip()
        if mode not in allowed:
            unknown.add(mode)
            continue
        try:
            x = _float(row[dist_col], dist_col)
            trips = _float(row["trips"], "trips")
        except ValueError as exc:
            raise InputError(f"{path}: line {line}: {exc}") from None
        if not math.isfinite(trips) or trips < 0:
            negative.append(line)
            continue
        if dist_col == "distance_mi":
            try:
                b = scheme.bin_of(x)
            except ValueError:
                out_of_scheme.append(line)
                continue
        else:
            b = int(x)
            if b != x or not 0 <= b < scheme.n_bins:
                out_of_scheme.append(line)
                continue
        parsed.append((mode, row["zone_id"].strip(), b, trips))
    if unknown:
        raise InputError(f"{path}: unknown mode label(s): {', '.join(sorted(unknown))}")
    if negative:
        raise InputError(f"{path}: negative or non-finite trips on line(s) {negative}")
    if out_of_scheme:
        raise InputError(f"{path}: distance out of scheme [0, {scheme.upper:g}) on line(s) {out_of_scheme}")

    if modes is None:
        present = {m for m, *_ in parsed}
        mode_list = [m for m in DEFAULT_MODES if m in present]
    else:
        mode_list = list(modes)
    if zones is None:
        zone_list = sorted({z for _, z, _, _ in parsed})
    else:
        zone_list = list(zones)
        extra = sorted({z for _, z, _, _ in parsed} - set(zone_list))
        if extra:
            raise InputError(f"{path}: trips for zone(s) outside the study area: {', '.join(extra)}")
    mi = {m: k for k, m in enumerate(mode_list)}
    zi = {z: k for k, z in enumerate(zone_list)}
    counts = np.zeros((len(mode_list), len(zone_list), scheme.n_bins))
    for mode, zone, b, trips in parsed:
        counts[mi[mode], zi[zone], b] += trips
    return ModalTripMatrix(tuple(mode_list), tuple(ZoneId(z, system) for z in zone_list), scheme, counts)


def write_trip_matrix(path, matrix: ModalTripMatrix) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "zone_id", "bin_index", "trips"])
        for m, mode in enumerate(matrix.modes):
            for i, z in enumerate(matrix.zones):
                for d in range(matrix.scheme.n_bins):
                    w.writerow([mode, z.id, d, fmt(matrix.counts[m, i, d])])


def load_access(path, system: str = "taz") -> list[TransitAccessProfile]:
    _, rows = _read_rows(path, ["zone_id", "access_hr", "egress_hr"])
    out = []
    for line, row in rows:
        try:
            out.append(TransitAccessProfile(ZoneId(row["zone_id"].strip(), system),
                                            _float(row["access_hr"], "access_hr"),
                                            _float(row["egress_hr"], "egress_hr")))
        except (ValueError, InputError) as exc:
            raise InputError(f"{path}: line {line}: {exc}") from None
    return out


def write_access(path, access: Sequence[TransitAccessProfile]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["zone_id", "access_hr", "egress_hr"])
        for a in access:
            w.writerow([a.zone.id, fmt(a.access_time), fmt(a.egress_time)])


def load_zone_values(path, column: str = "trips") -> dict[str, float]:
    """Read a two-column ``zone_id, <column>`` table."""
    _, rows = _read_rows(path, ["zone_id", column])
    out = {}
    for line, row in rows:
        zone = row["zone_id"].strip()
        if zone in out:
            raise InputError(f"{path}: line {line}: duplicate zone {zone}")
        try:
            out[zone] = _float(row[column], column)
        except ValueError as exc:
            raise InputError(f"{path}: line {line}: {exc}") from None
    return out


def write_zone_values(path, values: Mapping[str, float], column: str = "trips") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["zone_id", column])
        for z, v in values.items():
            w.writerow([z, fmt(v)])


def load_forecasts(path, system: str = "taz") -> list[DemandForecast]:
    try:
        return [DemandForecast(ZoneId(z, system), v) for z, v in load_zone_values(path).items()]
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from None
