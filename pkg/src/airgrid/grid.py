"""Cell-centre global grid, batched per-cell inference and tile files."""
from __future__ import annotations

import csv
import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DecodeError, IncompatibleError, ValidationError
from .features import N_FEATURES, CovariateSources, assemble_batch, utc_offset_from_longitude
from .stations import format_utc, parse_utc_hour

TILE_KINDS = ("Point", "Q05", "Q50", "Q95", "Index", "IndexSum")
TILE_MISSING = -1.0
BLOCK_CELLS = 1 << 15


@dataclass(frozen=True)
class GridSpec:
    """Regular cell-centre grid; the default is the global 0.25 degree grid."""

    resolution: float = 0.25
    lat0: float = -89.875
    lon0: float = -179.875
    nlat: int = 720
    nlon: int = 1440

    def __post_init__(self):
        if not self.resolution > 0 or self.nlat < 1 or self.nlon < 1:
            raise ValidationError("grid needs a positive resolution and at least one cell")

    @property
    def n_cells(self) -> int:
        return self.nlat * self.nlon

    def lat_centers(self) -> np.ndarray:
        return self.lat0 + np.arange(self.nlat) * self.resolution

    def lon_centers(self) -> np.ndarray:
        return self.lon0 + np.arange(self.nlon) * self.resolution

    def cell_centers(self, start: int = 0, stop: int | None = None):
        """Lat/lon of cells ``start:stop`` in lat-major order."""
        stop = self.n_cells if stop is None else stop
        k = np.arange(start, stop)
        i, j = np.divmod(k, self.nlon)
        return self.lat0 + i * self.resolution, self.lon0 + j * self.resolution

    @property
    def hash(self) -> str:
        text = f"res={self.resolution!r};lat0={self.lat0!r};lon0={self.lon0!r};nlat={self.nlat};nlon={self.nlon}"
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @classmethod
    def region(cls, lat_min: float, lat_max: float, lon_min: float, lon_max: float, resolution: float = 0.25):
        """Sub-grid whose cell centres follow the global registration (half-cell offset)."""
        def first(lo):
            return (np.ceil(lo / resolution - 0.5) + 0.5) * resolution

        lat0, lon0 = first(lat_min), first(lon_min)
        nlat = int(np.floor((lat_max - lat0) / resolution + 1e-9)) + 1
        nlon = int(np.floor((lon_max - lon0) / resolution + 1e-9)) + 1
        return cls(resolution, float(lat0), float(lon0), nlat, nlon)


def make_grid(spec: GridSpec = GridSpec()):
    """Yield every (lat, lon) cell centre, lat-major."""
    lons = spec.lon_centers()
    for lat in spec.lat_centers():
        for lon in lons:
            yield float(lat), float(lon)


@dataclass
class PredictionTile:
    pollutant: str
    timestamp: np.datetime64
    kind: str
    values: np.ndarray
    spec: GridSpec = field(default_factory=GridSpec)
    missing: float = TILE_MISSING

    def __post_init__(self):
        self.timestamp = np.datetime64(self.timestamp, "s")
        self.values = np.asarray(self.values, dtype=np.float32).reshape(-1)
        if self.kind not in TILE_KINDS:
            raise ValidationError(f"unknown tile kind {self.kind!r}")
        if self.values.size != self.spec.n_cells:
            raise ValidationError(f"tile has {self.values.size} values, grid has {self.spec.n_cells} cells")

    @property
    def completeness(self) -> float:
        return float(np.mean(self.values != self.missing))

    def as_grid(self) -> np.ndarray:
        return self.values.reshape(self.spec.nlat, self.spec.nlon)


def _check_model(model) -> None:
    if model.n_features != N_FEATURES:
        raise ValidationError(f"model expects {model.n_features} features, grid assembly yields {N_FEATURES}")


def predict_cells(models, sources: CovariateSources, t, spec: GridSpec = GridSpec(), threads: int = 1,
                  block_cells: int = BLOCK_CELLS) -> np.ndarray:
    """(len(models), n_cells) predictions with NaN where covariates are unresolvable.

    Cells are processed in contiguous blocks; each block writes only its own
    slice, so the result does not depend on ``threads``.
    """
    for m in models:
        _check_model(m)
    t = np.datetime64(t, "s")
    out = np.full((len(models), spec.n_cells), np.nan)

    def run(start):
        stop = min(start + block_cells, spec.n_cells)
        lat, lon = spec.cell_centers(start, stop)
        offsets = utc_offset_from_longitude(np.where(lon >= 180.0, lon - 360.0, lon))
        X, ok = assemble_batch(lat, lon, t, sources, offsets=offsets, strict=False)
        rows = np.flatnonzero(ok)
        if rows.size:
            Xo = X[rows]
            for k, m in enumerate(models):
                out[k, start + rows] = m.predict(Xo)

    starts = range(0, spec.n_cells, block_cells)
    if threads <= 1:
        for s in starts:
            run(s)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, starts))
    return out


def _to_tile(values: np.ndarray, pollutant, t, kind, spec) -> PredictionTile:
    v = values.astype(np.float32)
    v[np.isnan(values)] = TILE_MISSING
    return PredictionTile(pollutant, t, kind, v, spec)


def predict_tile(model, sources: CovariateSources, t, spec: GridSpec = GridSpec(), threads: int = 1,
                 kind: str = "Point", block_cells: int = BLOCK_CELLS) -> PredictionTile:
    """Treat every grid cell as a synthetic station and predict it at hour ``t``."""
    vals = predict_cells([model], sources, t, spec, threads, block_cells)[0]
    return _to_tile(vals, model.pollutant, t, kind, spec)


def predict_interval_tiles(triplet, sources: CovariateSources, t, spec: GridSpec = GridSpec(),
                           threads: int = 1, block_cells: int = BLOCK_CELLS):
    """(Q05, Q50, Q95) tiles with per-cell sorting so the bounds never cross."""
    raw = predict_cells(list(triplet.models()), sources, t, spec, threads, block_cells)
    ordered = np.sort(raw, axis=0)  # NaN sorts last; a missing cell is NaN in all three
    pollutant = triplet.q50.pollutant
    return tuple(_to_tile(ordered[k], pollutant, t, kind, spec) for k, kind in enumerate(("Q05", "Q50", "Q95")))


def write_tile(path, tile: PredictionTile) -> None:
    s = tile.spec
    header = [
        "aptile v1",
        f"pollutant={tile.pollutant}",
        f"timestamp={format_utc(tile.timestamp)}",
        f"kind={tile.kind}",
        f"gridspec_hash={s.hash}",
        f"missing={float(tile.missing)!r}",
        f"resolution={s.resolution!r}",
        f"lat0={s.lat0!r}",
        f"lon0={s.lon0!r}",
        f"nlat={s.nlat}",
        f"nlon={s.nlon}",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n\n").encode("utf-8"))
        fh.write(np.ascontiguousarray(tile.values, dtype="<f4").tobytes())


def read_tile(path, expected_spec: GridSpec | None = None) -> PredictionTile:
    raw = Path(path).read_bytes()
    head, sep, payload = raw.partition(b"\n\n")
    if not sep:
        raise DecodeError(f"{path}: header terminator not found")
    try:
        lines = head.decode("utf-8").split("\n")
    except UnicodeDecodeError:
        raise DecodeError(f"{path}: header is not text") from None
    if lines[0] != "aptile v1":
        raise DecodeError(f"{path}: not an aptile v1 file")
    meta = dict(line.partition("=")[::2] for line in lines[1:])
    try:
        spec = GridSpec(float(meta["resolution"]), float(meta["lat0"]), float(meta["lon0"]),
                        int(meta["nlat"]), int(meta["nlon"]))
        stored_hash = meta["gridspec_hash"]
        timestamp = parse_utc_hour(meta["timestamp"])
        missing = float(meta["missing"])
        pollutant, kind = meta["pollutant"], meta["kind"]
    except (KeyError, ValueError) as exc:
        raise DecodeError(f"{path}: bad header ({exc})") from None
    if stored_hash != spec.hash:
        raise DecodeError(f"{path}: grid geometry does not match its hash")
    if expected_spec is not None and stored_hash != expected_spec.hash:
        raise IncompatibleError(f"{path}: grid {stored_hash} differs from expected {expected_spec.hash}")
    if len(payload) != spec.n_cells * 4:
        raise DecodeError(f"{path}: payload is {len(payload)} bytes, expected {spec.n_cells * 4}")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    return PredictionTile(pollutant, timestamp, kind, values, spec, missing)


def export_tile_csv(path, tile: PredictionTile) -> None:
    lat, lon = tile.spec.cell_centers()
    ok = tile.values != tile.missing
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lat", "lon", "value"])
        for a, b, v in zip(lat[ok], lon[ok], tile.values[ok]):
            w.writerow([repr(float(a)), repr(float(b)), repr(float(v))])
