"""Station inventory, raw measurement ingest and quality control."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import CONTINENTS, POLLUTANTS
from .errors import ParseError, ValidationError

STATION_HEADER = ["station_id", "network_id", "country_code", "continent", "lat", "lon", "pollutant", "unit"]
MEASUREMENT_HEADER = ["station_id", "pollutant", "timestamp_utc", "value", "unit"]
QC_HEADER = ["station_id", "rule_id", "detail"]
UNITS = ("ug_m3", "ppb")
RULE_IDS = ("R1", "R2", "R3", "R4", "R5", "R6")


@dataclass(frozen=True)
class StationMeta:
    station_id: str
    network_id: str
    country_code: str
    continent: str
    lat: float
    lon: float
    pollutant: str
    unit: str

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"lat {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon < 180.0:
            raise ValidationError(f"lon {self.lon} outside [-180, 180)")
        if self.continent not in CONTINENTS:
            raise ValidationError(f"unknown continent {self.continent!r}")
        if self.pollutant not in POLLUTANTS:
            raise ValidationError(f"unknown pollutant {self.pollutant!r}")
        if self.unit not in UNITS:
            raise ValidationError(f"unknown unit {self.unit!r}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.station_id, self.pollutant)


@dataclass
class MeasurementSeries:
    """Hourly samples of one pollutant at one station.

    ``times`` is ``datetime64[s]`` in UTC, sorted ascending (stable, so raw
    duplicates stay adjacent until QC removes them).
    """

    station: StationMeta
    times: np.ndarray
    values: np.ndarray
    units: frozenset = field(default_factory=frozenset)

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class QcReport:
    kept: int
    rejected: list[tuple[str, str, str]]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(QC_HEADER)
            w.writerows(self.rejected)


@dataclass(frozen=True)
class QcRuleSet:
    """Switches for the six exclusion rules, checked in order R1..R6."""

    ppb_unit: bool = True
    too_few_points: bool = True
    conflicting_duplicates: bool = True
    constant_values: bool = True
    hour_coverage: bool = True
    weekday_coverage: bool = True
    min_points: int = 3


def parse_utc_hour(text: str) -> np.datetime64:
    """Parse an RFC-3339 ``...Z`` timestamp that must sit on a whole hour."""
    text = text.strip()
    if not text.endswith("Z"):
        raise ValueError(f"timestamp {text!r} lacks the Z suffix")
    try:
        ts = np.datetime64(text[:-1], "s")
    except ValueError as exc:
        raise ValueError(f"bad timestamp {text!r}") from exc
    if ts.astype(np.int64) % 3600 != 0:
        raise ValueError(f"timestamp {text!r} is not hour-aligned")
    return ts


def format_utc(ts) -> str:
    return str(np.datetime64(ts, "s")) + "Z"


def _check_header(row, expected, path):
    if row is None:
        raise ParseError("empty file, header missing", line=1, path=path)
    if [c.strip() for c in row] != expected:
        raise ParseError(f"header must be {','.join(expected)}", line=1, path=path)


def parse_station_file(path) -> list[StationMeta]:
    path = Path(path)
    out: list[StationMeta] = []
    seen: set[tuple[str, str]] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        _check_header(next(reader, None), STATION_HEADER, path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(STATION_HEADER):
                raise ParseError(f"expected {len(STATION_HEADER)} fields, got {len(row)}", lineno, path)
            sid, net, cc, cont, lat, lon, pol, unit = (c.strip() for c in row)
            try:
                latf, lonf = float(lat), float(lon)
            except ValueError:
                raise ParseError("lat/lon not numeric", lineno, path) from None
            if not (math.isfinite(latf) and math.isfinite(lonf)):
                raise ParseError("lat/lon not finite", lineno, path)
            if not sid:
                raise ParseError("empty station_id", lineno, path)
            try:
                meta = StationMeta(sid, net, cc, cont, latf, lonf, pol, unit)
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: line {lineno}: {exc}") from None
            if meta.key in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate (station_id, pollutant) {meta.key}")
            seen.add(meta.key)
            out.append(meta)
    return out


def write_station_file(path, stations) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATION_HEADER)
        for s in stations:
            w.writerow([s.station_id, s.network_id, s.country_code, s.continent,
                        repr(s.lat), repr(s.lon), s.pollutant, s.unit])


def parse_measurement_file(path, stations: list[StationMeta]) -> list[MeasurementSeries]:
    """Read raw measurements and group them per (station, pollutant).

    Every station in ``stations`` gets a series, possibly empty. Negative,
    non-finite, sub-hourly or orphan rows are malformed and raise.
    """
    path = Path(path)
    by_key = {s.key: s for s in stations}
    times: dict[tuple[str, str], list] = {k: [] for k in by_key}
    values: dict[tuple[str, str], list] = {k: [] for k in by_key}
    units: dict[tuple[str, str], set] = {k: set() for k in by_key}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        _check_header(next(reader, None), MEASUREMENT_HEADER, path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MEASUREMENT_HEADER):
                raise ParseError(f"expected {len(MEASUREMENT_HEADER)} fields, got {len(row)}", lineno, path)
            sid, pol, ts, val, unit = (c.strip() for c in row)
            key = (sid, pol)
            if key not in by_key:
                raise ParseError(f"no station entry for {key}", lineno, path)
            if unit not in UNITS:
                raise ParseError(f"unknown unit {unit!r}", lineno, path)
            try:
                t = parse_utc_hour(ts)
            except ValueError as exc:
                raise ParseError(str(exc), lineno, path) from None
            try:
                v = float(val)
            except ValueError:
                raise ParseError(f"value {val!r} not numeric", lineno, path) from None
            if not math.isfinite(v) or v < 0:
                raise ParseError(f"value {val!r} must be finite and >= 0", lineno, path)
            times[key].append(t)
            values[key].append(v)
            units[key].add(unit)
    out = []
    for s in stations:
        t = np.array(times[s.key], dtype="datetime64[s]")
        v = np.array(values[s.key], dtype=np.float64)
        order = np.argsort(t, kind="stable")
        out.append(MeasurementSeries(s, t[order], v[order], frozenset(units[s.key]) | {s.unit}))
    return out


def write_measurement_file(path, series_set) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MEASUREMENT_HEADER)
        for s in series_set:
            for t, v in zip(s.times, s.values):
                w.writerow([s.station.station_id, s.station.pollutant, format_utc(t), repr(float(v)), s.station.unit])


def _hours(times: np.ndarray) -> np.ndarray:
    return (times.astype(np.int64) // 3600) % 24


def _weekdays(times: np.ndarray) -> np.ndarray:
    # 1970-01-01 was a Thursday (Monday=0 -> 3)
    return (times.astype(np.int64) // 86400 + 3) % 7


def _first_violation(s: MeasurementSeries, rules: QcRuleSet):
    """Return (rule_id, detail, deduplicated series) for the first failed rule."""
    if rules.ppb_unit and "ppb" in s.units:
        return "R1", "measured in ppb", None
    t, v = s.times, s.values
    same = np.zeros(len(t), dtype=bool)
    if len(t) > 1:
        same[1:] = t[1:] == t[:-1]
    n_unique = int(len(t) - same.sum())
    if rules.too_few_points and n_unique < rules.min_points:
        return "R2", f"{n_unique} data points", None
    if same.any():
        clash = same.copy()
        clash[1:] &= v[1:] != v[:-1]
        if rules.conflicting_duplicates and clash.any():
            first = t[1:][clash[1:]][0]
            return "R3", f"differing values at {format_utc(first)}", None
        keep = ~same
        t, v = t[keep], v[keep]
    if rules.constant_values and len(v) and np.unique(v).size == 1:
        return "R4", f"constant value {v[0]!r}", None
    if rules.hour_coverage and len(t):
        missing = sorted(set(range(24)) - set(_hours(t).tolist()))
        if missing:
            return "R5", "missing hours " + " ".join(f"{h:02d}" for h in missing), None
    if rules.weekday_coverage and len(t):
        missing = sorted(set(range(7)) - set(_weekdays(t).tolist()))
        if missing:
            return "R6", "missing weekdays " + " ".join(str(d) for d in missing), None
    return None, None, MeasurementSeries(s.station, t, v, s.units)


def apply_qc(series_set, rules: QcRuleSet | None = None):
    """Drop series that fail any enabled rule.

    Returns the surviving series (identical-value duplicate timestamps
    collapsed) and a report naming the first failed rule per rejection,
    ordered by station id then pollutant.
    """
    rules = rules or QcRuleSet()
    kept, rejected = [], []
    for s in sorted(series_set, key=lambda s: s.station.key):
        rule, detail, clean = _first_violation(s, rules)
        if rule is None:
            kept.append(clean)
        else:
            rejected.append((s.station.station_id, rule, f"{s.station.pollutant}: {detail}"))
    return kept, QcReport(kept=len(kept), rejected=rejected)


def station_summary(series: MeasurementSeries) -> dict:
    if len(series) == 0:
        raise ValidationError("station_summary needs a non-empty series")
    v = series.values
    return {
        "station_id": series.station.station_id,
        "pollutant": series.station.pollutant,
        "count": int(v.size),
        "min": float(v.min()),
        "max": float(v.max()),
        "mean": float(np.mean(v)),
        "distinct": int(np.unique(v).size),
        "first": format_utc(series.times[0]),
        "last": format_utc(series.times[-1]),
    }
