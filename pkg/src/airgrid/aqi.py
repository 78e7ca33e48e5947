"""Banded air quality index: per-pollutant subindices, overall index, annual products."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import POLLUTANTS
from .errors import ConfigError, ParseError, ValidationError

N_BANDS = 10
BAND_GROUPS = {"Low": (1, 2, 3), "Moderate": (4, 5, 6), "High": (7, 8, 9), "Very High": (10,)}

# UK DAQI upper band edges in ug/m3 (bands 1-9; band 10 is open-ended)
DEFAULT_BOUNDS = {
    "NO2": (67, 134, 200, 267, 334, 400, 467, 534, 600),
    "O3": (33, 66, 100, 120, 140, 160, 187, 213, 240),
    "PM10": (16, 33, 50, 58, 66, 75, 83, 91, 100),
    "PM2_5": (11, 23, 35, 41, 47, 53, 58, 64, 70),
    "SO2": (88, 177, 266, 354, 443, 532, 710, 887, 1064),
}


@dataclass(frozen=True)
class DaqiTable:
    bounds: dict[str, tuple[float, ...]]

    def __post_init__(self):
        for p, b in self.bounds.items():
            if len(b) != N_BANDS:
                raise ValidationError(f"{p}: expected {N_BANDS} band bounds, got {len(b)}")
            if not math.isinf(b[-1]) or b[-1] < 0:
                raise ValidationError(f"{p}: band {N_BANDS} upper bound must be inf")
            if any(not lo < hi for lo, hi in zip(b, b[1:])):
                raise ValidationError(f"{p}: bounds must be strictly increasing")

    @classmethod
    def default(cls) -> "DaqiTable":
        return cls({p: tuple(float(x) for x in b) + (math.inf,) for p, b in DEFAULT_BOUNDS.items()})

    def upper_bounds(self, pollutant: str) -> np.ndarray:
        try:
            return np.asarray(self.bounds[pollutant], dtype=np.float64)
        except KeyError:
            raise ConfigError(f"pollutant {pollutant!r} missing from the DAQI table") from None


def read_daqi_table(path) -> DaqiTable:
    rows: dict[str, dict[int, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if [c.strip() for c in next(reader, [])] != ["pollutant", "band", "upper_bound"]:
            raise ParseError("header must be pollutant,band,upper_bound", 1, path)
        for lineno, r in enumerate(reader, start=2):
            if not r:
                continue
            try:
                p, band, ub = r[0].strip(), int(r[1]), float(r[2])
            except (ValueError, IndexError):
                raise ParseError("malformed row", lineno, path) from None
            if p not in POLLUTANTS:
                raise ParseError(f"unknown pollutant {p!r}", lineno, path)
            if not 1 <= band <= N_BANDS or band in rows.setdefault(p, {}):
                raise ParseError(f"bad or repeated band {band}", lineno, path)
            rows[p][band] = ub
    bounds = {}
    for p, bands in rows.items():
        if sorted(bands) != list(range(1, N_BANDS + 1)):
            raise ValidationError(f"{path}: {p} needs bands 1..{N_BANDS}")
        bounds[p] = tuple(bands[b] for b in range(1, N_BANDS + 1))
    return DaqiTable(bounds)


def write_daqi_table(path, table: DaqiTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pollutant", "band", "upper_bound"])
        for p in POLLUTANTS:
            if p in table.bounds:
                for band, ub in enumerate(table.bounds[p], start=1):
                    w.writerow([p, band, "inf" if math.isinf(ub) else repr(ub)])


def subindex(pollutant: str, c, table: DaqiTable):
    """Band 1..10: the smallest band whose (inclusive) upper edge is >= c."""
    ub = table.upper_bounds(pollutant)
    arr = np.asarray(c, dtype=np.float64)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValidationError("concentrations must be >= 0")
    band = np.minimum(np.searchsorted(ub, arr, side="left") + 1, N_BANDS)
    return int(band) if band.ndim == 0 else band.astype(np.int64)


def overall_index(subindices):
    """Worst (maximum) available subindex. Accepts scalars or per-pollutant arrays."""
    items = list(subindices.values()) if isinstance(subindices, dict) else list(subindices)
    if not items:
        raise ValidationError("overall_index needs at least one subindex")
    out = np.asarray(items[0])
    for s in items[1:]:
        out = np.maximum(out, s)
    return int(out) if out.ndim == 0 else out


def _check_geometry(tiles):
    if not tiles:
        raise ValidationError("no tiles supplied")
    ref = tiles[0]
    for t in tiles[1:]:
        if t.spec != ref.spec:
            raise ValidationError("tiles do not share grid geometry")


def index_tile(tile, table: DaqiTable):
    """Subindex tile from a concentration tile; missing cells stay missing."""
    from .grid import PredictionTile

    vals = tile.values
    ok = vals != tile.missing
    out = np.full(vals.shape, tile.missing, dtype=np.float32)
    out[ok] = subindex(tile.pollutant, vals[ok].astype(np.float64), table)
    return PredictionTile(tile.pollutant, tile.timestamp, "Index", out, tile.spec, tile.missing)


def annual_summation(tiles):
    """Per-cell sum of hourly index tiles (any missing hour makes the cell missing)."""
    from .grid import PredictionTile

    _check_geometry(tiles)
    ref = tiles[0]
    total = np.zeros(ref.values.shape, dtype=np.float64)
    bad = np.zeros(ref.values.shape, dtype=bool)
    for t in tiles:
        bad |= t.values == t.missing
        total += t.values
    out = total.astype(np.float32)
    out[bad] = ref.missing
    return PredictionTile(ref.pollutant, ref.timestamp, "IndexSum", out, ref.spec, ref.missing)


def driving_subindex(summations: dict):
    """Per cell, position in POLLUTANTS of the largest annual subindex sum.

    Ties go to the pollutant earliest in POLLUTANTS. Cells missing in every
    input come back as -1.
    """
    tiles = [summations[p] for p in POLLUTANTS if p in summations]
    _check_geometry(tiles)
    if set(summations) - set(POLLUTANTS):
        raise ValidationError(f"unknown pollutants {sorted(set(summations) - set(POLLUTANTS))}")
    codes = [POLLUTANTS.index(p) for p in POLLUTANTS if p in summations]
    stack = np.stack([np.where(t.values == t.missing, -np.inf, t.values.astype(np.float64)) for t in tiles])
    best = np.argmax(stack, axis=0)  # first maximum wins
    out = np.asarray(codes)[best]
    out[np.all(np.isneginf(stack), axis=0)] = -1
    return out.astype(np.int64)
