"""Feature assembly: calendar fields, gridded covariate sampling, emissions totals."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AssemblyError, DecodeError, MissingDataError, OutOfDomainError, ParseError, ValidationError
from .stations import format_utc, parse_utc_hour

TEMPORAL = ("hour", "day_of_week", "week_number", "month", "utc_offset")
METEOROLOGY = (
    "u100", "v100", "u10", "v10", "dewpoint_2m", "temp_2m", "boundary_layer_height",
    "downward_uv", "wind_gust_10m", "surface_pressure", "total_column_rain_water",
)
REMOTE_SENSING = ("rs_no2", "rs_o3", "rs_so2", "rs_aai")
EMISSIONS = ("em_co", "em_nox", "em_nmvoc", "em_other_voc", "em_so2", "em_biogenic_co")
FEATURE_NAMES = TEMPORAL + METEOROLOGY + REMOTE_SENSING + EMISSIONS
COVARIATE_NAMES = METEOROLOGY + REMOTE_SENSING + EMISSIONS
N_FEATURES = len(FEATURE_NAMES)
assert N_FEATURES == 26

# the anthropogenic inventory is split by sector; features are per-species totals
SECTOR_SEPARATOR = "__"
_SNAP = 1e-9


# -- calendar -----------------------------------------------------------------

def _as_seconds(t) -> np.ndarray:
    return np.asarray(t, dtype="datetime64[s]")


def temporal_fields(times) -> np.ndarray:
    """(n, 4) int array of hour, weekday (Mon=0), ISO week and month, all in UTC."""
    t = _as_seconds(times).astype(np.int64)
    days = t // 86400
    hour = (t // 3600) % 24
    dow = (days + 3) % 7
    thursday = (days - dow + 3).astype("datetime64[D]")
    year_start = thursday.astype("datetime64[Y]").astype("datetime64[D]")
    week = (thursday - year_start).astype(np.int64) // 7 + 1
    month = _as_seconds(times).astype("datetime64[M]").astype(np.int64) % 12 + 1
    return np.stack([hour, dow, week, month], axis=-1)


def temporal_features(t, offset_hours: int) -> tuple[int, int, int, int, int]:
    t = np.datetime64(t, "s")
    if t.astype(np.int64) % 3600:
        raise ValidationError(f"{t} is not hour-aligned")
    h, d, w, m = (int(x) for x in temporal_fields(t))
    return h, d, w, m, int(offset_hours)


def utc_offset_from_longitude(lon):
    """Nominal solar-time offset: lon/15 rounded half away from zero, clamped to [-12, 14]."""
    lon_arr = np.asarray(lon, dtype=np.float64)
    if np.any(~np.isfinite(lon_arr)) or np.any((lon_arr < -180.0) | (lon_arr >= 180.0)):
        raise ValidationError("longitude must lie in [-180, 180)")
    x = lon_arr / 15.0
    off = np.clip(np.sign(x) * np.floor(np.abs(x) + 0.5), -12, 14).astype(np.int64)
    return int(off) if off.ndim == 0 else off


# -- covariate grids ----------------------------------------------------------

@dataclass
class CovariateGrid:
    """Regular lat/lon grid of cell-centre values over a sequence of instants.

    ``values`` has shape (n_times, nlat, nlon). Cells equal to ``missing`` (or
    non-finite) are treated as absent.
    """

    name: str
    lat0: float
    lon0: float
    dlat: float
    dlon: float
    times: np.ndarray
    values: np.ndarray
    missing: float = -9999.0

    def __post_init__(self):
        self.times = _as_seconds(self.times).reshape(-1)
        self.values = np.asarray(self.values)
        if self.values.ndim != 3:
            raise ValidationError(f"{self.name}: values must be 3-d (time, lat, lon)")
        if not (self.dlat > 0 and self.dlon > 0):
            raise ValidationError(f"{self.name}: dlat and dlon must be positive")
        if self.values.shape[0] != self.times.size:
            raise ValidationError(f"{self.name}: {self.times.size} times but {self.values.shape[0]} slices")
        if self.times.size == 0:
            raise ValidationError(f"{self.name}: no time slices")
        if np.any(np.diff(self.times.astype(np.int64)) <= 0):
            raise ValidationError(f"{self.name}: times must be strictly increasing")

    @property
    def nlat(self) -> int:
        return self.values.shape[1]

    @property
    def nlon(self) -> int:
        return self.values.shape[2]

    def same_geometry(self, other: "CovariateGrid") -> bool:
        return (
            (self.lat0, self.lon0, self.dlat, self.dlon) == (other.lat0, other.lon0, other.dlat, other.dlon)
            and self.values.shape == other.values.shape
            and np.array_equal(self.times, other.times)
        )

    def time_index(self, times) -> np.ndarray:
        """Slice index at or before each instant; -1 where the instant is outside the span."""
        t = _as_seconds(times).astype(np.int64)
        grid_t = self.times.astype(np.int64)
        idx = np.searchsorted(grid_t, t, side="right") - 1
        if grid_t.size > 1:
            end = grid_t[-1] + (grid_t[-1] - grid_t[-2])
            idx = np.where(t >= end, -1, idx)
        return idx

    def sample(self, lats, lons, times, strict: bool = True) -> np.ndarray:
        """Bilinear sample at many points, step-function in time.

        With ``strict`` the first unresolvable point raises; otherwise it
        comes back as NaN.
        """
        lats = np.atleast_1d(np.asarray(lats, dtype=np.float64))
        lons = np.atleast_1d(np.asarray(lons, dtype=np.float64))
        lats, lons = np.broadcast_arrays(lats, lons)
        ti = np.broadcast_to(self.time_index(np.atleast_1d(times)), lats.shape)

        fi = _snap((lats - self.lat0) / self.dlat)
        fj = _snap((lons - self.lon0) / self.dlon)
        inside = (fi >= 0) & (fi <= self.nlat - 1) & (fj >= 0) & (fj <= self.nlon - 1) & (ti >= 0)
        if strict and not inside.all():
            k = int(np.argmin(inside))
            raise OutOfDomainError(
                f"{self.name}: ({lats[k]}, {lons[k]}) at slice {int(ti[k])} outside the grid")

        i0, wy = _corner(fi, self.nlat)
        j0, wx = _corner(fj, self.nlon)
        i1 = np.minimum(i0 + 1, self.nlat - 1)
        j1 = np.minimum(j0 + 1, self.nlon - 1)
        tt = np.where(inside, ti, 0)

        num = np.zeros(lats.shape)
        den = np.zeros(lats.shape)
        for ii, jj, w in (
            (i0, j0, (1 - wy) * (1 - wx)),
            (i0, j1, (1 - wy) * wx),
            (i1, j0, wy * (1 - wx)),
            (i1, j1, wy * wx),
        ):
            v = self.values[tt, ii, jj].astype(np.float64)
            ok = np.isfinite(v) & (v != self.missing)
            num += np.where(ok, w * np.where(ok, v, 0.0), 0.0)
            den += np.where(ok, w, 0.0)
        resolved = inside & (den > 0)
        if strict and not resolved.all():
            k = int(np.argmin(resolved))
            raise MissingDataError(f"{self.name}: no valid neighbours around ({lats[k]}, {lons[k]})")
        with np.errstate(invalid="ignore", divide="ignore"):
            out = num / den
        out[~resolved] = np.nan
        return out


def _snap(f: np.ndarray) -> np.ndarray:
    r = np.round(f)
    return np.where(np.abs(f - r) < _SNAP, r, f)


def _corner(f: np.ndarray, n: int):
    if n == 1:
        return np.zeros(f.shape, dtype=np.int64), np.zeros(f.shape)
    i0 = np.clip(np.floor(np.nan_to_num(f)), 0, n - 2).astype(np.int64)
    return i0, np.clip(f - i0, 0.0, 1.0)


def interpolate_grid(g: CovariateGrid, lat: float, lon: float, t) -> float:
    return float(g.sample([lat], [lon], [t], strict=True)[0])


def write_covgrid(path, g: CovariateGrid) -> None:
    header = [
        "covgrid v1",
        f"name={g.name}",
        f"lat0={g.lat0!r}",
        f"lon0={g.lon0!r}",
        f"dlat={g.dlat!r}",
        f"dlon={g.dlon!r}",
        f"nlat={g.nlat}",
        f"nlon={g.nlon}",
        "times=" + ",".join(format_utc(t) for t in g.times),
        f"missing={float(g.missing)!r}",
    ]
    payload = np.ascontiguousarray(g.values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n\n").encode("utf-8"))
        fh.write(payload)


def read_covgrid(path) -> CovariateGrid:
    raw = Path(path).read_bytes()
    head, sep, payload = raw.partition(b"\n\n")
    if not sep:
        raise DecodeError(f"{path}: header terminator not found")
    lines = head.decode("utf-8").split("\n")
    if lines[0].strip() != "covgrid v1":
        raise DecodeError(f"{path}: not a covgrid v1 file")
    meta = {}
    for line in lines[1:]:
        k, eq, v = line.partition("=")
        if not eq:
            raise DecodeError(f"{path}: malformed header line {line!r}")
        meta[k.strip()] = v.strip()
    try:
        nlat, nlon = int(meta["nlat"]), int(meta["nlon"])
        times = np.array([parse_utc_hour(s) for s in meta["times"].split(",")], dtype="datetime64[s]")
        expected = times.size * nlat * nlon * 4
        if len(payload) != expected:
            raise DecodeError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
        values = np.frombuffer(payload, dtype="<f4").reshape(times.size, nlat, nlon)
        return CovariateGrid(
            name=meta["name"], lat0=float(meta["lat0"]), lon0=float(meta["lon0"]),
            dlat=float(meta["dlat"]), dlon=float(meta["dlon"]), times=times,
            values=values, missing=float(meta["missing"]),
        )
    except (KeyError, ValueError) as exc:
        raise DecodeError(f"{path}: bad header ({exc})") from None


def read_covgrid_csv(path, name: str | None = None, missing: float = -9999.0) -> CovariateGrid:
    """Small-fixture alternative: ``time,lat,lon,value`` rows on a regular grid."""
    path = Path(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if [c.strip() for c in next(reader, [])] != ["time", "lat", "lon", "value"]:
            raise ParseError("header must be time,lat,lon,value", 1, path)
        for lineno, r in enumerate(reader, start=2):
            if not r:
                continue
            try:
                rows.append((parse_utc_hour(r[0]), float(r[1]), float(r[2]), float(r[3])))
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), lineno, path) from None
    if not rows:
        raise ParseError("no data rows", 2, path)
    times = np.unique(np.array([r[0] for r in rows], dtype="datetime64[s]"))
    lats = np.unique([r[1] for r in rows])
    lons = np.unique([r[2] for r in rows])

    def step(axis):
        if axis.size == 1:
            return 1.0
        d = np.diff(axis)
        if not np.allclose(d, d[0], rtol=1e-6, atol=1e-9):
            raise ParseError("coordinates are not evenly spaced", None, path)
        return float(d[0])

    dlat, dlon = step(lats), step(lons)
    values = np.full((times.size, lats.size, lons.size), missing, dtype=np.float64)
    ti = np.searchsorted(times, [r[0] for r in rows])
    ii = np.rint((np.array([r[1] for r in rows]) - lats[0]) / dlat).astype(int)
    jj = np.rint((np.array([r[2] for r in rows]) - lons[0]) / dlon).astype(int)
    values[ti, ii, jj] = [r[3] for r in rows]
    return CovariateGrid(name or path.stem, float(lats[0]), float(lons[0]), dlat, dlon, times, values, missing)


def monthly_average(series) -> np.ndarray:
    """Mean of the non-missing values in each calendar month.

    ``series`` is an iterable of (instant, value-or-None). Months with no
    valid observation come back as NaN.
    """
    sums = np.zeros(12)
    counts = np.zeros(12, dtype=np.int64)
    for t, v in series:
        if v is None or not math.isfinite(v):
            continue
        m = int(np.datetime64(t, "M").astype(np.int64) % 12)
        sums[m] += v
        counts[m] += 1
    out = np.full(12, np.nan)
    has = counts > 0
    out[has] = sums[has] / counts[has]
    return out


# -- sources and assembly -----------------------------------------------------

class CovariateSources:
    """The 21 covariate grids keyed by feature name.

    Emissions species may be given as per-sector grids named
    ``<species>__<sector>``; they are summed into the species total.
    """

    def __init__(self, grids: dict[str, CovariateGrid] | None = None):
        self.raw = dict(grids or {})
        self.grids: dict[str, CovariateGrid] = {}
        sectors: dict[str, list[CovariateGrid]] = {}
        for name, g in (grids or {}).items():
            species, sep, _ = name.partition(SECTOR_SEPARATOR)
            if sep:
                sectors.setdefault(species, []).append(g)
            else:
                self.grids[name] = g
        for species, parts in sorted(sectors.items()):
            if species not in self.grids:
                self.grids[species] = sum_sector_grids(species, parts)

    @classmethod
    def from_directory(cls, path) -> "CovariateSources":
        path = Path(path)
        grids = {}
        for f in sorted(path.iterdir()):
            if f.suffix == ".covgrid":
                grids[f.stem] = read_covgrid(f)
            elif f.suffix == ".csv":
                grids[f.stem] = read_covgrid_csv(f)
        return cls(grids)

    def missing_names(self) -> list[str]:
        return [n for n in COVARIATE_NAMES if n not in self.grids]

    def __getitem__(self, name: str) -> CovariateGrid:
        return self.grids[name]


def sum_sector_grids(name: str, parts: list[CovariateGrid]) -> CovariateGrid:
    first = parts[0]
    for p in parts[1:]:
        if not first.same_geometry(p):
            raise ValidationError(f"sector grids for {name} do not share geometry")
    total = np.zeros(first.values.shape)
    bad = np.zeros(first.values.shape, dtype=bool)
    for p in parts:
        v = p.values.astype(np.float64)
        bad |= ~np.isfinite(v) | (v == p.missing)
        total += np.where(bad, 0.0, v)
    total[bad] = first.missing
    return CovariateGrid(name, first.lat0, first.lon0, first.dlat, first.dlon, first.times, total, first.missing)


def assemble_batch(lats, lons, times, sources: CovariateSources, offsets=None, strict: bool = True):
    """Feature rows for many (lat, lon, t) queries.

    Returns ``(X, ok)``; with ``strict`` any unresolvable covariate raises
    :class:`AssemblyError`, otherwise failing rows are flagged in ``ok``.
    """
    lats = np.atleast_1d(np.asarray(lats, dtype=np.float64))
    lons = np.atleast_1d(np.asarray(lons, dtype=np.float64))
    times = np.broadcast_to(_as_seconds(times), lats.shape)
    if offsets is None:
        offsets = utc_offset_from_longitude(lons)
    X = np.empty((lats.size, N_FEATURES), dtype=np.float64)
    X[:, :4] = temporal_fields(times)
    X[:, 4] = np.broadcast_to(offsets, lats.shape)
    ok = np.ones(lats.size, dtype=bool)
    for k, name in enumerate(COVARIATE_NAMES, start=len(TEMPORAL)):
        if name not in sources.grids:
            if strict:
                raise AssemblyError(f"feature {k} ({name}): no covariate grid", k)
            X[:, k] = np.nan
            ok[:] = False
            continue
        try:
            col = sources.grids[name].sample(lats, lons, times, strict=strict)
        except (OutOfDomainError, MissingDataError) as exc:
            raise AssemblyError(f"feature {k} ({name}): {exc}", k) from None
        X[:, k] = col
        ok &= np.isfinite(col)
    return X, ok


def assemble(lat: float, lon: float, t, sources: CovariateSources, offset: int | None = None) -> np.ndarray:
    """One canonical 26-element feature vector."""
    X, _ = assemble_batch([lat], [lon], [np.datetime64(t, "s")], sources,
                          offsets=None if offset is None else [offset])
    return X[0]


def format_feature_vector(v) -> str:
    if len(v) != N_FEATURES:
        raise ValidationError(f"expected {N_FEATURES} values, got {len(v)}")
    return ",".join(repr(float(x)) for x in v)


def parse_feature_vector(text: str) -> np.ndarray:
    parts = text.strip().split(",")
    if len(parts) != N_FEATURES:
        raise ParseError(f"expected {N_FEATURES} values, got {len(parts)}")
    return np.array([float(p) for p in parts])
