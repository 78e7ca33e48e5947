"""Per-station scores and the aggregate tables built from them."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import CONTINENTS
from .errors import ValidationError

SCORE_HEADER = ["station_id", "pollutant", "experiment", "n", "r2", "bias", "pearson"]


def _pair(obs, pred):
    obs = np.asarray(obs, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if obs.shape != pred.shape or obs.ndim != 1:
        raise ValidationError("obs and pred must be equal-length 1-d sequences")
    return obs, pred


def r2(obs, pred) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot."""
    obs, pred = _pair(obs, pred)
    if obs.size < 2:
        raise ValidationError("r2 needs at least two observations")
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValidationError("r2 undefined for constant observations")
    return 1.0 - float(np.sum((obs - pred) ** 2)) / ss_tot


def bias(obs, pred) -> float:
    """Mean of pred - obs; positive means the model overestimates."""
    obs, pred = _pair(obs, pred)
    if obs.size < 1:
        raise ValidationError("bias needs at least one observation")
    return float(np.mean(pred - obs))


def pearson(obs, pred) -> float:
    """Product-moment correlation; NaN (undefined) when either series is constant."""
    obs, pred = _pair(obs, pred)
    if obs.size < 2:
        return math.nan
    a = obs - obs.mean()
    b = pred - pred.mean()
    denom = math.sqrt(float(np.sum(a * a)) * float(np.sum(b * b)))
    if denom == 0.0:
        return math.nan
    return float(np.clip(np.sum(a * b) / denom, -1.0, 1.0))


@dataclass
class StationScore:
    station_id: str
    n: int
    r2: float
    bias: float
    pearson: float
    continent: str = ""
    country_code: str = ""
    pollutant: str = ""
    experiment: str = ""

    @property
    def pearson_defined(self) -> bool:
        return not math.isnan(self.pearson)


def score_station(station_id, obs, pred, **meta) -> StationScore:
    obs, pred = _pair(obs, pred)
    try:
        r = r2(obs, pred)
    except ValidationError:
        r = math.nan
    return StationScore(station_id, int(obs.size), r, bias(obs, pred), pearson(obs, pred), **meta)


def positive_r2_table(scores) -> dict:
    """Station total plus per-continent counts of r2 > 0 (NaN counts as not positive).

    Stations without a known continent count toward the total only.
    """
    row = {"total": len(scores)}
    for c in CONTINENTS:
        row[c] = 0
    for s in scores:
        if s.r2 > 0 and s.continent in row and s.continent != "total":
            row[s.continent] += 1
    return row


def iqr90(values) -> tuple[float, float, float]:
    """5th and 95th percentiles (linear interpolation) and their spread."""
    v = np.asarray(values, dtype=np.float64)
    v = v[~np.isnan(v)]
    if v.size == 0:
        raise ValidationError("iqr90 needs at least one value")
    lo, hi = np.percentile(v, [5, 95], method="linear")
    return float(lo), float(hi), float(max(hi - lo, 0.0))


def write_scores_csv(path, scores) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_HEADER)
        for s in scores:
            w.writerow([s.station_id, s.pollutant, s.experiment, s.n, repr(s.r2), repr(s.bias), repr(s.pearson)])


def read_scores_csv(path) -> list[StationScore]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(StationScore(row["station_id"], int(row["n"]), float(row["r2"]), float(row["bias"]),
                                    float(row["pearson"]), pollutant=row["pollutant"], experiment=row["experiment"]))
    return out


def write_continent_table(path, rows: dict) -> None:
    """One line per pollutant: total stations and positive-r2 counts per continent."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pollutant", "total", *CONTINENTS])
        for pollutant, row in rows.items():
            w.writerow([pollutant, row["total"], *(row[c] for c in CONTINENTS)])
