"""Twelve hand-labelled stations, each built to trip exactly the rule named in LABELS."""
import numpy as np

from airgrid.stations import StationMeta, format_utc

T0 = np.datetime64("2022-03-07T00:00:00", "s")  # a Monday
HOUR = np.timedelta64(3600, "s")

# station_id -> expected first rule (None = kept)
LABELS = {
    "Q01": "R1",   # ppb unit
    "Q02": "R2",   # two samples
    "Q03": "R3",   # repeated timestamp, different values
    "Q04": "R4",   # every value 7.0
    "Q05": "R5",   # hour 13 never observed
    "Q06": "R6",   # no Sunday samples
    "Q07": None,   # full week, hourly
    "Q08": None,   # identical duplicates collapse
    "Q09": None,   # one sample per hour spread over months
    "Q10": "R1",   # ppb and constant: R1 wins
    "Q11": "R2",   # two constant samples: R2 wins over R4
    "Q12": None,   # includes zeros but not constant
}


def _week(rng, n_days=7):
    t = T0 + np.arange(24 * n_days) * HOUR
    return t, np.round(rng.uniform(5, 60, t.size), 3)


def build(seed=3):
    rng = np.random.default_rng(seed)
    stations, rows = [], []

    def add(sid, times, values, unit="ug_m3"):
        meta = StationMeta(sid, "NET", "FR", "Europe", 45.0, 2.0, "NO2", unit)
        stations.append(meta)
        for t, v in zip(times, values):
            rows.append((sid, "NO2", format_utc(t), repr(float(v)), unit))

    t, v = _week(rng)
    add("Q01", t, v, unit="ppb")
    add("Q02", T0 + np.arange(2) * HOUR, [3.0, 4.0])
    t, v = _week(rng)
    add("Q03", np.append(t, t[10]), np.append(v, v[10] + 1.0))
    t, _ = _week(rng)
    add("Q04", t, np.full(t.size, 7.0))
    t, v = _week(rng)
    keep = (t.astype(np.int64) // 3600) % 24 != 13
    add("Q05", t[keep], v[keep])
    t, v = _week(rng)
    add("Q06", t[: 24 * 6], v[: 24 * 6])
    add("Q07", *_week(rng))
    t, v = _week(rng)
    add("Q08", np.append(t, t[:5]), np.append(v, v[:5]))
    hours = np.arange(24)
    add("Q09", T0 + (hours * 15 * 24 + hours) * HOUR, rng.uniform(5, 60, 24))
    t, _ = _week(rng)
    add("Q10", t, np.full(t.size, 7.0), unit="ppb")
    add("Q11", T0 + np.arange(2) * HOUR, [7.0, 7.0])
    t, v = _week(rng)
    v[::3] = 0.0
    add("Q12", t, v)
    return stations, rows


def write(dirpath, seed=3):
    stations, rows = build(seed)
    sp, mp = dirpath / "qc_stations.csv", dirpath / "qc_measurements.csv"
    with open(sp, "w") as fh:
        fh.write("station_id,network_id,country_code,continent,lat,lon,pollutant,unit\n")
        for s in stations:
            fh.write(f"{s.station_id},{s.network_id},{s.country_code},{s.continent},{s.lat},{s.lon},{s.pollutant},{s.unit}\n")
    with open(mp, "w") as fh:
        fh.write("station_id,pollutant,timestamp_utc,value,unit\n")
        for r in rows:
            fh.write(",".join(r) + "\n")
    return sp, mp
