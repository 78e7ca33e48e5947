import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from airgrid.errors import ValidationError
from airgrid.gbdt import BinnedDataset, TrainParams, model_space, serialize, transform_target
from airgrid.grid import GridSpec, PredictionTile
from airgrid.intervals import interval_size_sum, predict_interval, predict_intervals, train_triplet

T0 = np.datetime64("2022-05-01T00:00:00", "s")
P = TrainParams(num_leaves=15, min_data_in_leaf=30, learning_rate=0.1, max_trees=200, early_stopping_rounds=20)


def uniform_noise(rng, n, scale=1.0):
    X = rng.uniform(0, 10, (n, 2))
    return X, 2 + X[:, 0] + rng.uniform(-scale, scale, n)


def sets(rng, scale=1.0):
    X, y = uniform_noise(rng, 4000, scale)
    Xv, yv = uniform_noise(rng, 1000, scale)
    tr = BinnedDataset.from_matrix(X, model_space(y))
    return tr, tr.like(Xv, model_space(yv))


class Fixed:
    def __init__(self, v):
        self.v = v
        self.n_features = 1
        self.pollutant = "NO2"

    def predict(self, X):
        return np.full(len(X), self.v)


def test_sort_repairs_crossing():
    from airgrid.intervals import QuantileTriplet

    t = QuantileTriplet(Fixed(5.0), Fixed(4.0), Fixed(6.0))
    p = predict_interval(t, [0.0])
    assert (p.lo, p.mid, p.hi) == (4.0, 5.0, 6.0)
    t = QuantileTriplet(Fixed(2.0), Fixed(5.0), Fixed(9.0))
    p = predict_interval(t, [0.0])
    assert (p.lo, p.mid, p.hi) == (2.0, 5.0, 9.0)


def test_constant_target_triplet(rng):
    X = rng.uniform(size=(300, 2))
    tr = BinnedDataset.from_matrix(X, transform_target(np.full(300, 12.0)))
    t = train_triplet(P, tr)
    np.testing.assert_allclose(predict_intervals(t, X[:20]), 12.0, rtol=1e-12)


@pytest.fixture(scope="module")
def triplet():
    rng = np.random.default_rng(8)
    tr, va = sets(rng)
    return train_triplet(P, tr, va)


def test_uniform_width_and_order(triplet):
    rng = np.random.default_rng(9)
    X, _ = uniform_noise(rng, 1000)
    b = predict_intervals(triplet, X)
    assert np.all(b[:, 0] <= b[:, 1]) and np.all(b[:, 1] <= b[:, 2]) and np.all(b >= 0)
    assert abs(np.median(b[:, 2] - b[:, 0]) - 1.8) <= 0.2


def test_triplet_deterministic(triplet):
    rng = np.random.default_rng(8)
    tr, va = sets(rng)
    again = train_triplet(P, tr, va)
    assert [serialize(m) for m in again.models()] == [serialize(m) for m in triplet.models()]


def test_width_grows_with_noise():
    widths = []
    for scale in (0.5, 2.0):
        rng = np.random.default_rng(1)
        tr, va = sets(rng, scale)
        t = train_triplet(P, tr, va)
        b = predict_intervals(t, uniform_noise(np.random.default_rng(2), 500, scale)[0])
        widths.append(np.median(b[:, 2] - b[:, 0]))
    assert widths[0] < widths[1]


def tile(vals, t, spec):
    return PredictionTile("NO2", t, "Q05", np.asarray(vals, dtype=np.float32), spec)


def test_interval_size_sum_hand_fixture():
    spec = GridSpec(1.0, 0.5, 0.5, 1, 3)
    h1, h2 = T0, T0 + np.timedelta64(3600, "s")
    pairs = [(tile([1, 2, 3], h1, spec), tile([2, 5, 4], h1, spec)),
             (tile([0, 1, 1], h2, spec), tile([4, 1, 3], h2, spec))]
    r = interval_size_sum(pairs)
    # widths: cell0 1+4=5, cell1 3+0=3, cell2 1+2=3 -> ties by lon ascending
    assert r.interval_size_sum.tolist() == [5.0, 3.0, 3.0]
    assert r.lon.tolist() == [0.5, 1.5, 2.5]
    zero = interval_size_sum([(tile([1, 2, 3], h1, spec), tile([1, 2, 3], h1, spec))])
    assert np.all(zero.interval_size_sum == 0)


def test_interval_size_sum_geometry_mismatch():
    a, b = GridSpec(1.0, 0.5, 0.5, 1, 3), GridSpec(1.0, 0.5, 0.5, 3, 1)
    with pytest.raises(ValidationError):
        interval_size_sum([(tile([1, 2, 3], T0, a), tile([1, 2, 3], T0, b))])


@given(st.integers(0, 1000), st.permutations(range(4)))
def test_interval_size_sum_permutation_invariant(seed, perm):
    rng = np.random.default_rng(seed)
    spec = GridSpec(1.0, 0.5, 0.5, 2, 3)
    pairs = []
    for k in range(4):
        lo = rng.uniform(0, 10, 6)
        t = T0 + k * np.timedelta64(3600, "s")
        pairs.append((tile(lo, t, spec), tile(lo + rng.uniform(0, 5, 6), t, spec)))
    a = interval_size_sum(pairs)
    b = interval_size_sum([pairs[i] for i in perm])
    assert a.interval_size_sum.tobytes() == b.interval_size_sum.tobytes()
    assert a.lat.tolist() == b.lat.tolist() and a.lon.tolist() == b.lon.tolist()


def test_dominant_cell_ranks_first(tmp_path):
    spec = GridSpec(1.0, 0.5, 0.5, 2, 2)
    pairs = [(tile([0, 0, 0, 0], T0 + k * np.timedelta64(3600, "s"), spec),
              tile([1, 1, 9, 1], T0 + k * np.timedelta64(3600, "s"), spec)) for k in range(3)]
    r = interval_size_sum(pairs)
    assert (r.lat[0], r.lon[0]) == (1.5, 0.5)
    r.write_csv(tmp_path / "r.csv", k=2)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "rank,lat,lon,interval_size_sum" and lines[1].startswith("1,1.5,0.5,27.0")
    assert len(lines) == 3
