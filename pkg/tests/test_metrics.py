import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from airgrid import CONTINENTS
from airgrid.errors import ValidationError
from airgrid.metrics import (StationScore, bias, iqr90, pearson, positive_r2_table, r2, read_scores_csv,
                             score_station, write_continent_table, write_scores_csv)
from oracles import naive_bias, naive_pearson, naive_r2


def test_r2_examples():
    obs = [1.0, 2.0, 3.0]
    assert r2(obs, obs) == 1.0
    assert r2(obs, [2.0, 2.0, 2.0]) == 0.0
    assert r2(obs, [1.0, 2.0, 4.0]) == pytest.approx(0.5)
    with pytest.raises(ValidationError):
        r2([4.0, 4.0], [1.0, 2.0])


def test_bias_and_pearson_examples(rng):
    obs = rng.normal(10, 3, 50)
    assert bias(obs, obs) == 0.0
    assert bias(obs, obs + 2) == pytest.approx(2.0)
    assert pearson(obs, 3 * obs) == pytest.approx(1.0)
    assert pearson(obs, -obs) == pytest.approx(-1.0)
    assert math.isnan(pearson(obs, np.ones(50)))


def test_metrics_match_naive_oracles(rng):
    for _ in range(100):
        n = int(rng.integers(2, 200))
        obs = rng.normal(20, 8, n)
        pred = obs + rng.normal(rng.uniform(-5, 5), rng.uniform(0.1, 10), n)
        o, p = obs.tolist(), pred.tolist()
        assert abs(r2(obs, pred) - naive_r2(o, p)) <= 1e-9
        assert abs(bias(obs, pred) - naive_bias(o, p)) <= 1e-12
        assert abs(pearson(obs, pred) - naive_pearson(o, p)) <= 1e-12


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40), st.floats(0.1, 10), st.floats(-50, 50))
def test_pearson_affine_invariance_and_bias_shift(vals, scale, shift):
    obs = np.array(vals)
    if np.ptp(obs) < 1e-6:
        return
    pred = obs[::-1] + np.arange(obs.size)
    if np.ptp(pred) < 1e-6:
        return
    p = pearson(obs, pred)
    if not math.isnan(p):
        assert pearson(obs, scale * pred + shift) == pytest.approx(p, abs=1e-9)
    assert bias(obs, pred + shift) == pytest.approx(bias(obs, pred) + shift, abs=1e-9)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=40))
def test_r2_one_iff_exact(vals):
    obs = np.array(vals)
    if np.ptp(obs) == 0:
        return
    assert r2(obs, obs) == 1.0
    pred = obs.copy()
    pred[0] += 1e-3
    assert r2(obs, pred) < 1.0


def test_offset_lowers_r2_keeps_pearson(rng):
    obs = rng.normal(30, 5, 500)
    last = 1.0
    for c in (0.5, 1, 2, 5, 10, 20):
        s = score_station("x", obs, obs + c)
        assert s.r2 < last and s.pearson == pytest.approx(1.0)
        last = s.r2


def test_positive_r2_table_examples():
    neg = [StationScore(f"s{i}", 10, -0.5, 0, 0, continent="Asia") for i in range(3)]
    row = positive_r2_table(neg)
    assert row["total"] == 3 and all(row[c] == 0 for c in CONTINENTS)
    row = positive_r2_table([StationScore("4327", 100, 0.81, 0, 0, continent="Europe")])
    assert row["Europe"] == 1
    row = positive_r2_table([StationScore("x", 10, 0.5, 0, 0)])
    assert row["total"] == 1 and sum(row[c] for c in CONTINENTS) == 0


def test_positive_r2_table_group_oracle(rng):
    scores = [StationScore(f"s{i}", 10, float(rng.uniform(-1, 1)), 0, 0, continent=str(rng.choice(CONTINENTS)))
              for i in range(10)]
    row = positive_r2_table(scores)
    for c in CONTINENTS:
        assert row[c] == len([s for s in scores if s.continent == c and s.r2 > 0])


def test_iqr90_examples():
    assert iqr90([4.0] * 7) == (4.0, 4.0, 0.0)
    lo, hi, w = iqr90(np.arange(1, 101))
    assert (lo, hi) == pytest.approx((5.95, 95.05)) and w == pytest.approx(89.1)
    assert iqr90([7.0]) == (7.0, 7.0, 0.0)


def test_scores_csv_roundtrip(tmp_path):
    scores = [score_station("a", [1.0, 2, 3], [1.1, 2.2, 2.9], pollutant="NO2", experiment="baseline")]
    write_scores_csv(tmp_path / "s.csv", scores)
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "station_id,pollutant,experiment,n,r2,bias,pearson"
    back = read_scores_csv(tmp_path / "s.csv")
    assert (back[0].r2, back[0].bias, back[0].pearson) == (scores[0].r2, scores[0].bias, scores[0].pearson)
    write_continent_table(tmp_path / "t.csv", {"NO2": positive_r2_table(scores)})
    assert (tmp_path / "t.csv").read_text().startswith("pollutant,total,Asia,")
