"""Hold-out splitting and spatial fold plans."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .aqi import DaqiTable, subindex
from .errors import ValidationError

TRAIN, VALID, TEST = "train", "validation", "test"
SHARES = (7, 2, 1)  # tenths going to train / validation / test
MIN_STRATUM = 3


def allocate(n: int) -> tuple[int, int, int]:
    """70/20/10 counts for a stratum of n rows, largest-remainder rounding."""
    if n < MIN_STRATUM:
        return n, 0, 0
    quotas = [n * s for s in SHARES]
    base = [q // 10 for q in quotas]
    left = n - sum(base)
    # larger remainder first; on equal remainders train, then validation, then test
    order = sorted(range(3), key=lambda i: (-(quotas[i] % 10), i))
    for i in order[:left]:
        base[i] += 1
    return tuple(base)


def stratified_split(station_id, target, pollutant, daqi: DaqiTable, seed: int):
    """Row indices (train, validation, test).

    Strata are (station, DAQI band); each is shuffled with ``seed`` and dealt
    70/20/10. Strata with fewer than three rows go wholly to train.
    """
    station_id = np.asarray(station_id)
    target = np.asarray(target, dtype=np.float64)
    if station_id.size == 0:
        raise ValidationError("cannot split an empty row set")
    pollutant = np.broadcast_to(np.asarray(pollutant, dtype=object), station_id.shape)
    bands = np.empty(station_id.size, dtype=np.int64)
    for p in sorted(set(pollutant.tolist())):
        m = pollutant == p
        bands[m] = subindex(p, target[m], daqi)
    strata: dict[tuple, list[int]] = {}
    for i, key in enumerate(zip(station_id.tolist(), pollutant.tolist(), bands.tolist())):
        strata.setdefault(key, []).append(i)

    rng = np.random.default_rng(seed)
    out = ([], [], [])
    for key in sorted(strata):
        rows = np.array(strata[key])
        rows = rows[rng.permutation(rows.size)]
        n_tr, n_va, _ = allocate(rows.size)
        out[0].append(rows[:n_tr])
        out[1].append(rows[n_tr:n_tr + n_va])
        out[2].append(rows[n_tr + n_va:])
    return tuple(np.sort(np.concatenate(part)).astype(np.int64) for part in out)


@dataclass(frozen=True)
class FoldPlan:
    """Station -> fold label assignment.

    For the leave-group-out kinds each plan holds one group out: its
    stations carry ``test`` and everyone else ``train``.
    """

    kind: str
    assignments: dict[str, str]
    seed: int = 0
    held_out: str | None = None
    folds: tuple[str, ...] = field(default=())

    def stations_in(self, label: str) -> list[str]:
        return sorted(s for s, lab in self.assignments.items() if lab == label)

    @property
    def degenerate(self) -> bool:
        return self.kind in ("LeaveCountryOut", "LeaveContinentOut") and not self.stations_in(TRAIN)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["station_id", "fold_label"])
            for sid in sorted(self.assignments):
                w.writerow([sid, self.assignments[sid]])


def _unique_stations(stations):
    seen = {}
    for s in stations:
        seen.setdefault(s.station_id, s)
    return [seen[k] for k in sorted(seen)]


def within_network_kfold(stations, k: int = 10, seed: int = 0) -> FoldPlan:
    """Shuffle each network's stations and deal them round-robin into k folds."""
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    by_net: dict[str, list[str]] = {}
    for s in _unique_stations(stations):
        by_net.setdefault(s.network_id, []).append(s.station_id)
    labels = tuple(f"fold{i}" for i in range(k))
    assignments = {}
    for net in sorted(by_net):
        ids = by_net[net]
        for pos, j in enumerate(rng.permutation(len(ids))):
            assignments[ids[j]] = labels[pos % k]
    return FoldPlan("WithinNetworkKFold", assignments, seed, folds=labels)


def leave_group_out(stations, grouping: str) -> list[FoldPlan]:
    """One plan per distinct country (or continent), holding that group out."""
    attr = {"Country": "country_code", "Continent": "continent"}.get(grouping)
    if attr is None:
        raise ValidationError(f"grouping must be Country or Continent, got {grouping!r}")
    kind = f"Leave{grouping}Out"
    uniq = _unique_stations(stations)
    for s in uniq:
        if not getattr(s, attr):
            raise ValidationError(f"station {s.station_id} has an empty {attr}")
    groups = sorted({getattr(s, attr) for s in uniq})
    return [
        FoldPlan(kind, {s.station_id: TEST if getattr(s, attr) == g else TRAIN for s in uniq},
                 held_out=g, folds=(TRAIN, TEST))
        for g in groups
    ]


def write_index_manifest(path, parts: dict[str, np.ndarray]) -> None:
    """Row-index manifest: ``row_index,set`` lines referencing a feature table."""
    rows = sorted((int(i), name) for name, idx in parts.items() for i in idx)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_index", "set"])
        w.writerows(rows)
