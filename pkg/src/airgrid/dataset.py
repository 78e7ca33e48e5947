"""Row-per-observation feature tables built from cleaned station series."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .features import FEATURE_NAMES, N_FEATURES, CovariateSources, assemble_batch, utc_offset_from_longitude
from .stations import format_utc, parse_utc_hour

KEY_COLUMNS = ("station_id", "network_id", "country_code", "continent", "pollutant", "timestamp_utc")


@dataclass
class FeatureMatrix:
    X: np.ndarray
    y: np.ndarray
    station_id: np.ndarray
    network_id: np.ndarray
    country_code: np.ndarray
    continent: np.ndarray
    pollutant: np.ndarray
    timestamp: np.ndarray

    def __len__(self) -> int:
        return self.y.size

    def take(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        return FeatureMatrix(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))

    def stations(self) -> list[str]:
        return sorted(set(self.station_id.tolist()))


def build_feature_matrix(series_set, sources: CovariateSources, offset_overrides: dict | None = None) -> FeatureMatrix:
    """Assemble features for every sample of every (cleaned) series."""
    offset_overrides = offset_overrides or {}
    parts = []
    for s in series_set:
        meta = s.station
        n = len(s)
        if n == 0:
            continue
        off = offset_overrides.get(meta.station_id, utc_offset_from_longitude(meta.lon))
        X, _ = assemble_batch(np.full(n, meta.lat), np.full(n, meta.lon), s.times, sources,
                              offsets=np.full(n, off))
        parts.append((X, s.values, meta, s.times))
    if not parts:
        raise ValueError("no samples to build a feature matrix from")

    def col(attr):
        return np.concatenate([np.full(len(p[1]), getattr(p[2], attr), dtype=object) for p in parts])

    return FeatureMatrix(
        X=np.concatenate([p[0] for p in parts]),
        y=np.concatenate([p[1] for p in parts]).astype(np.float64),
        station_id=col("station_id"),
        network_id=col("network_id"),
        country_code=col("country_code"),
        continent=col("continent"),
        pollutant=col("pollutant"),
        timestamp=np.concatenate([p[3] for p in parts]),
    )


def write_feature_csv(path, fm: FeatureMatrix) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*KEY_COLUMNS, *FEATURE_NAMES, "target"])
        for i in range(len(fm)):
            w.writerow([
                fm.station_id[i], fm.network_id[i], fm.country_code[i], fm.continent[i],
                fm.pollutant[i], format_utc(fm.timestamp[i]),
                *(repr(float(x)) for x in fm.X[i]), repr(float(fm.y[i])),
            ])


def read_feature_csv(path) -> FeatureMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != [*KEY_COLUMNS, *FEATURE_NAMES, "target"]:
            raise ParseError("unexpected feature table header", 1, path)
        rows = [r for r in reader if r]
    keys = np.array([r[:5] for r in rows], dtype=object).reshape(-1, 5)
    try:
        ts = np.array([parse_utc_hour(r[5]) for r in rows], dtype="datetime64[s]")
        nums = np.array([[float(x) for x in r[6:]] for r in rows]).reshape(-1, N_FEATURES + 1)
    except ValueError as exc:
        raise ParseError(str(exc), None, path) from None
    return FeatureMatrix(nums[:, :N_FEATURES], nums[:, N_FEATURES], keys[:, 0], keys[:, 1],
                         keys[:, 2], keys[:, 3], keys[:, 4], ts)
