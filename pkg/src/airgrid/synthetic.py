"""Synthetic covariate worlds and station networks for fixtures and tests.

Targets are a known smooth function of the covariates plus Gaussian noise
and a per-country additive offset. The offset is invisible to the model
unless the country's stations are in the training data.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aqi import DaqiTable, write_daqi_table
from .features import COVARIATE_NAMES, EMISSIONS, METEOROLOGY, REMOTE_SENSING, CovariateGrid, CovariateSources, write_covgrid
from .stations import MeasurementSeries, StationMeta, write_measurement_file, write_station_file

START = np.datetime64("2022-01-01T00:00:00", "s")
NOX_SECTORS = ("road", "energy", "industry")

COUNTRIES = {
    # code: (continent, lat range, lon range, additive offset ug/m3)
    "ES": ("Europe", (37.0, 43.0), (-8.0, -1.0), 0.0),
    "FR": ("Europe", (44.0, 49.0), (0.0, 6.0), 12.0),
    "US": ("NorthAmerica", (33.0, 42.0), (-110.0, -85.0), -6.0),
    "CA": ("NorthAmerica", (43.0, 50.0), (-100.0, -72.0), 18.0),
}


def _days(t) -> np.ndarray:
    return (np.asarray(t, dtype="datetime64[s]") - START).astype(np.int64) / 86400.0


def meteorology(name: str, lat, lon, t) -> np.ndarray:
    """Analytic meteorological fields; arguments broadcast together."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    d = _days(t)
    solar = (d % 1.0) * 24.0 + lon / 15.0
    sun = np.maximum(0.0, np.sin(2 * np.pi * (solar - 6.0) / 24.0))
    u10 = 4.0 * np.sin(2 * np.pi * d / 5.0 + lon / 15.0) + 1.0
    v10 = 3.0 * np.cos(2 * np.pi * d / 4.0 + lat / 10.0)
    temp = 288.0 - 0.6 * (lat - 40.0) + 6.0 * np.sin(2 * np.pi * (solar - 9.0) / 24.0) \
        + 3.0 * np.sin(2 * np.pi * d / 7.0 + lon / 20.0)
    fields = {
        "u10": lambda: u10,
        "v10": lambda: v10,
        "u100": lambda: 1.5 * u10 + 0.5,
        "v100": lambda: 1.5 * v10,
        "temp_2m": lambda: temp,
        "dewpoint_2m": lambda: temp - 5.0 - 2.0 * np.sin(2 * np.pi * d / 9.0),
        "boundary_layer_height": lambda: 600.0 + 500.0 * sun + 100.0 * np.cos(2 * np.pi * d / 6.0),
        "downward_uv": lambda: 50.0 * sun,
        "wind_gust_10m": lambda: 1.6 * np.hypot(u10, v10) + 1.0,
        "surface_pressure": lambda: 101300.0 + 800.0 * np.sin(2 * np.pi * d / 6.0 + lon / 30.0),
        "total_column_rain_water": lambda: 0.2 * np.maximum(0.0, np.sin(2 * np.pi * d / 3.0 + lat / 5.0)),
    }
    return np.broadcast_to(fields[name](), np.broadcast_shapes(lat.shape, lon.shape, np.shape(d))).copy()


def static_field(name: str, lat, lon) -> np.ndarray:
    """Time-invariant remote-sensing and emissions fields."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    k = (COVARIATE_NAMES.index(name.partition("__")[0]) + 1) * (1 + len(name.partition("__")[2]))
    return 1.0 + 0.5 * np.sin(lat / (7.0 + k % 5) + k) * np.cos(lon / (11.0 + k % 7) - k) + 0.002 * k * (lat - lon / 4)


def target(lat, lon, t, offset: float, noise: np.ndarray, em_nox) -> np.ndarray:
    """NO2-like concentration driven by wind, mixing height, local time and NOx emissions."""
    ws = np.hypot(meteorology("u10", lat, lon, t), meteorology("v10", lat, lon, t))
    blh = meteorology("boundary_layer_height", lat, lon, t)
    local = (_days(t) % 1.0) * 24.0 + np.round(np.asarray(lon) / 15.0)
    y = 22.0 + offset + 14.0 * np.exp(-ws / 3.0) + 0.012 * (1100.0 - blh) \
        + 6.0 * np.sin(2 * np.pi * (local - 5.0) / 12.0) + 0.7 * np.asarray(em_nox) + noise
    return np.maximum(y, 0.5)


@dataclass
class FixtureWorld:
    stations: list[StationMeta]
    series: list[MeasurementSeries]
    sources: CovariateSources
    daqi: DaqiTable


def make_sources(lat0: float, lon0: float, step: float, nlat: int, nlon: int, times) -> CovariateSources:
    lats = lat0 + np.arange(nlat) * step
    lons = lon0 + np.arange(nlon) * step
    times = np.asarray(times, dtype="datetime64[s]")
    month0 = np.array([np.datetime64(times[0], "M").astype("datetime64[s]")])
    grids = {}
    for name in METEOROLOGY:
        vals = meteorology(name, lats[None, :, None], lons[None, None, :], times[:, None, None])
        grids[name] = CovariateGrid(name, float(lat0), float(lon0), step, step, times, vals.astype(np.float32))
    for name in REMOTE_SENSING + EMISSIONS:
        names = [f"{name}__{s}" for s in NOX_SECTORS] if name == "em_nox" else [name]
        for n in names:
            vals = static_field(n, lats[:, None], lons[None, :])[None]
            grids[n] = CovariateGrid(n, float(lat0), float(lon0), step, step, month0, vals.astype(np.float32))
    return CovariateSources(grids)


def make_world(seed: int = 7, days: int = 30, noise_sd: float = 1.0) -> FixtureWorld:
    rng = np.random.default_rng(seed)
    times = START + np.arange(days * 24) * np.timedelta64(3600, "s")
    sources = make_sources(30.0, -125.0, 2.5, 11, 55, times)
    stations, series = [], []
    sid = 0
    for cc, (continent, (la0, la1), (lo0, lo1), offset) in COUNTRIES.items():
        for _ in range(5):
            lat = float(np.round(rng.uniform(la0, la1), 4))
            lon = float(np.round(rng.uniform(lo0, lo1), 4))
            meta = StationMeta(f"S{sid:03d}", f"N{sid % 5}", cc, continent, lat, lon, "NO2", "ug_m3")
            noise = rng.normal(0.0, noise_sd, times.size)
            em = sources["em_nox"].sample(np.full(times.size, lat), np.full(times.size, lon), times)
            y = np.round(target(lat, lon, times, offset, noise, em), 6)
            stations.append(meta)
            series.append(MeasurementSeries(meta, times.copy(), y, frozenset({"ug_m3"})))
            sid += 1
    return FixtureWorld(stations, series, sources, DaqiTable.default())


RUN_TOML = """\
[paths]
stations = "stations.csv"
measurements = "measurements.csv"
covariates = "covariates"
daqi = "daqi.csv"
out = "out"

[run]
pollutant = "NO2"
seed = 7

[train]
num_leaves = 63
min_data_in_leaf = 20
lambda_l2 = 1.0
learning_rate = 0.1
max_trees = 400

[search]
num_leaves = [16, 127]
min_data_in_leaf = [10, 60]
lambda_l2 = [0.001, 10.0]
n_candidates = 5

[grid]
timestamps = ["2022-01-15T08:00:00Z", "2022-01-15T20:00:00Z"]
lat_min = 31.0
lat_max = 54.0
lon_min = -124.0
lon_max = 9.0
resolution = 0.25
"""


def write_world(out_dir, seed: int = 7, days: int = 30) -> Path:
    """Write a complete fixture (CSV inputs, covariate grids, DAQI table, run.toml)."""
    out = Path(out_dir)
    (out / "covariates").mkdir(parents=True, exist_ok=True)
    world = make_world(seed, days)
    write_station_file(out / "stations.csv", world.stations)
    write_measurement_file(out / "measurements.csv", world.series)
    write_daqi_table(out / "daqi.csv", world.daqi)
    for name, g in world.sources.raw.items():
        write_covgrid(out / "covariates" / f"{name}.covgrid", g)
    (out / "run.toml").write_text(RUN_TOML, encoding="utf-8")
    return out / "run.toml"
