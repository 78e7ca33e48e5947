"""Baseline and spatial hold-out experiments over a feature matrix."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aqi import DaqiTable
from .dataset import FeatureMatrix
from .gbdt import MAX_BINS, BinnedDataset, TrainParams, TreeEnsemble, fit, model_space
from .metrics import StationScore, score_station
from .splits import FoldPlan, TEST, leave_group_out, stratified_split, within_network_kfold
from .stations import StationMeta

EXPERIMENTS = ("baseline", "within-network", "between-country", "between-continent")


@dataclass
class ExperimentResult:
    experiment: str
    scores: list[StationScore]
    models: list[TreeEnsemble]
    plans: list[FoldPlan]


def station_metas(fm: FeatureMatrix) -> list[StationMeta]:
    """One lightweight metadata record per station present in the matrix."""
    seen = {}
    for i in range(len(fm)):
        sid = fm.station_id[i]
        if sid not in seen:
            seen[sid] = StationMeta(sid, fm.network_id[i], fm.country_code[i], fm.continent[i],
                                    0.0, 0.0, fm.pollutant[i], "ug_m3")
    return [seen[k] for k in sorted(seen)]


def binned_split(fm: FeatureMatrix, train_idx, valid_idx, params: TrainParams, max_bins: int = MAX_BINS):
    tr = BinnedDataset.from_matrix(fm.X[train_idx], model_space(fm.y[train_idx], params.transform), max_bins)
    va = tr.like(fm.X[valid_idx], model_space(fm.y[valid_idx], params.transform)) if len(valid_idx) else None
    return tr, va


def score_rows(fm: FeatureMatrix, rows, pred, experiment: str) -> list[StationScore]:
    out = []
    sids = fm.station_id[rows]
    for sid in sorted(set(sids.tolist())):
        m = sids == sid
        first = rows[np.argmax(m)]
        out.append(score_station(sid, fm.y[rows][m], pred[m], continent=fm.continent[first],
                                 country_code=fm.country_code[first], pollutant=fm.pollutant[first],
                                 experiment=experiment))
    return out


def _train_on(fm: FeatureMatrix, pool, params: TrainParams, daqi: DaqiTable, seed: int) -> TreeEnsemble:
    """Fit on a pool of rows, holding out the stratified validation share for early stopping."""
    sub = fm.take(pool)
    tr, va, te = stratified_split(sub.station_id, sub.y, sub.pollutant, daqi, seed)
    train_rows = np.sort(np.concatenate([tr, te]))
    return fit(params, sub.X[train_rows], sub.y[train_rows], sub.X[va], sub.y[va], pollutant=str(sub.pollutant[0]))


def run_baseline(fm: FeatureMatrix, params: TrainParams, daqi: DaqiTable, seed: int) -> ExperimentResult:
    """Train on 70%, early-stop on 20%, score each station on its 10% test rows."""
    tr, va, te = stratified_split(fm.station_id, fm.y, fm.pollutant, daqi, seed)
    model = fit(params, fm.X[tr], fm.y[tr], fm.X[va], fm.y[va], pollutant=str(fm.pollutant[0]))
    scores = score_rows(fm, te, model.predict(fm.X[te]), "baseline") if te.size else []
    return ExperimentResult("baseline", scores, [model], [])


def run_fold_plans(fm: FeatureMatrix, plans, experiment: str, params: TrainParams, daqi: DaqiTable,
                   seed: int) -> ExperimentResult:
    """Each held-out label: train on every other station, score the held-out stations on all their rows."""
    scores, models, used = [], [], []
    for plan in plans:
        labels = [TEST] if plan.kind != "WithinNetworkKFold" else list(plan.folds)
        for label in labels:
            held = set(plan.stations_in(label))
            if not held:
                continue
            is_held = np.array([s in held for s in fm.station_id])
            pool, rows = np.flatnonzero(~is_held), np.flatnonzero(is_held)
            if pool.size == 0:
                continue  # degenerate plan: nothing left to train on
            model = _train_on(fm, pool, params, daqi, seed)
            models.append(model)
            scores.extend(score_rows(fm, rows, model.predict(fm.X[rows]), experiment))
        used.append(plan)
    scores.sort(key=lambda s: s.station_id)
    return ExperimentResult(experiment, scores, models, used)


def run_experiment(name: str, fm: FeatureMatrix, params: TrainParams, daqi: DaqiTable, seed: int,
                   k: int = 10) -> ExperimentResult:
    if name == "baseline":
        return run_baseline(fm, params, daqi, seed)
    stations = station_metas(fm)
    if name == "within-network":
        plans = [within_network_kfold(stations, k=k, seed=seed)]
    elif name == "between-country":
        plans = leave_group_out(stations, "Country")
    elif name == "between-continent":
        plans = leave_group_out(stations, "Continent")
    else:
        raise ValueError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    return run_fold_plans(fm, plans, name, params, daqi, seed)
