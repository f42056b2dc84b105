"""
Tests for `loadlab.dtw`.
"""

import datetime

from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

import numpy as np

import pandas as pd

import pytest

import loadlab.dtw as dtw
import loadlab.exceptions as exceptions
import loadlab.profiles as profiles

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

series = hnp.arrays(np.float64, st.integers(1, 7),
                    elements=st.floats(0.0, 50.0))


def _paths(n, m):
    """Every monotone alignment path from (0, 0) to (n-1, m-1)."""
    if n == 1 and m == 1:
        yield [(0, 0)]
        return
    for di, dj in ((1, 0), (0, 1), (1, 1)):
        if n - di >= 1 and m - dj >= 1:
            for path in _paths(n - di, m - dj):
                yield path + [(n - 1, m - 1)]


def _oracle(x, y):
    return min(sum((x[i] - y[j]) ** 2 for i, j in path)
               for path in _paths(len(x), len(y)))


def _frame(rows, complete=True):
    day = datetime.date(2021, 1, 1)
    return profiles.to_frame([
        profiles.DailyProfile('H{}'.format(i), day, 0, row, complete)
        for i, row in enumerate(rows)])


class TestDtwDistance(object):

    def test_single(self):
        assert dtw.dtw_distance([3.0], [5.0]) == 4.0

    def test_warp(self):
        assert dtw.dtw_distance([0.0, 2.0, 3.0], [0.0, 3.0]) == 1.0

    def test_identity(self):
        x = np.random.default_rng(0).random(24)
        assert dtw.dtw_distance(x, x) == 0.0

    @pytest.mark.parametrize('x,y', [([], [1.0]), ([1.0], [])])
    def test_empty(self, x, y):
        with pytest.raises(ValueError):
            dtw.dtw_distance(x, y)

    @given(series, series)
    def test_matches_path_enumeration(self, x, y):
        assert dtw.dtw_distance(x, y) == pytest.approx(_oracle(x, y),
                                                       rel=1e-12, abs=1e-9)

    @given(series, series)
    def test_symmetric(self, x, y):
        assert dtw.dtw_distance(x, y) == dtw.dtw_distance(y, x)

    @given(hnp.arrays(np.float64, 24, elements=st.floats(0.0, 50.0)),
           hnp.arrays(np.float64, 24, elements=st.floats(0.0, 50.0)))
    def test_at_most_squared_euclidean(self, x, y):
        assert dtw.dtw_distance(x, y) <= np.sum((x - y) ** 2) + 1e-9

    def test_shifted_pulse(self):
        x = np.zeros(24)
        x[18] = 40.0
        y = np.roll(x, 1)
        assert dtw.dtw_distance(x, y) < np.sum((x - y) ** 2)

    def test_cost_matrix_corner(self):
        rng = np.random.default_rng(1)
        x, y = rng.random(7), rng.random(5)
        full = dtw.dtw_cost_matrix(x, y)
        assert full.shape == (7, 5)
        assert full[0, 0] == (x[0] - y[0]) ** 2
        assert full[-1, -1] == pytest.approx(dtw.dtw_distance(x, y))


class TestDistanceMatrix(object):

    def test_identical_profiles(self):
        D = dtw.distance_matrix(np.tile(np.arange(24.0), (3, 1)), threads=2)
        np.testing.assert_array_equal(D.values, np.zeros((3, 3)))

    def test_against_oracle(self):
        rng = np.random.default_rng(2)
        X = rng.gamma(2.0, 3.0, size=(10, 24))
        D = dtw.distance_matrix(X, threads=3)
        assert np.all(D.values == D.values.T)
        assert np.all(np.diag(D.values) == 0)
        assert np.all(D.values >= 0)
        for i, j in [(0, 1), (2, 7), (3, 9), (5, 6), (8, 4)]:
            assert D.values[i, j] == pytest.approx(
                dtw.dtw_cost_matrix(X[i], X[j])[-1, -1])

    def test_path_oracle_on_short_profiles(self):
        rng = np.random.default_rng(3)
        X = rng.random((4, 24))
        D = dtw.distance_matrix(X, threads=1)
        # enumeration is exponential, so compare on 6-hour prefixes
        for i, j in [(0, 1), (2, 3)]:
            x, y = X[i, :6], X[j, :6]
            assert dtw.dtw_distance(x, y) == pytest.approx(_oracle(x, y))
            assert D.values[i, j] == dtw.dtw_distance(X[i], X[j])

    def test_thread_count_independent(self):
        X = np.random.default_rng(4).random((37, 24))
        one = dtw.distance_matrix(X, threads=1)
        many = dtw.distance_matrix(X, threads=5)
        np.testing.assert_array_equal(one.values, many.values)

    def test_profile_table_keys(self):
        frame = _frame([np.ones(24), np.zeros(24)])
        D = dtw.distance_matrix(frame, threads=1)
        assert D.values[0, 1] == 24.0
        assert D.keys['household_id'].tolist() == ['H0', 'H1']
        assert D.key_labels() == ['H0/2021-01-01', 'H1/2021-01-01']

    def test_gaps_rejected(self):
        X = np.ones((2, 24))
        X[1, 5] = np.nan
        with pytest.raises(exceptions.IncompleteProfileError):
            dtw.distance_matrix(X)

    def test_incomplete_rejected(self):
        with pytest.raises(exceptions.IncompleteProfileError):
            dtw.distance_matrix(_frame([np.ones(24)] * 2, complete=False))

    def test_too_few(self):
        with pytest.raises(ValueError):
            dtw.distance_matrix(np.ones((1, 24)))


class TestDistanceMatrixFile(object):

    def test_save_load(self, tmp_path):
        frame = _frame(np.random.default_rng(5).random((6, 24)))
        D = dtw.distance_matrix(frame, threads=2)
        path = str(tmp_path / 'd.bin')
        D.save(path)
        loaded = dtw.DistanceMatrix.load(path)
        np.testing.assert_array_equal(loaded.values, D.values)
        assert loaded.keys.equals(D.keys)

    def test_layout(self, tmp_path):
        values = np.array([[0.0, 1.0, 2.0],
                           [1.0, 0.0, 3.0],
                           [2.0, 3.0, 0.0]])
        path = str(tmp_path / 'd.bin')
        dtw.DistanceMatrix(values).save(path)
        with open(path, 'rb') as f:
            blob = f.read()
        assert blob[:4] == b'LLDM'
        assert np.frombuffer(blob, '<u2', 1, 4)[0] == 1
        assert np.frombuffer(blob, '<u8', 1, 6)[0] == 3
        assert np.frombuffer(blob, '<f8', offset=14).tolist() == [1.0, 2.0,
                                                                   3.0]

    def test_bad_magic(self, tmp_path):
        path = tmp_path / 'd.bin'
        path.write_bytes(b'NOPE' + b'\x00' * 20)
        with pytest.raises(exceptions.DataError):
            dtw.DistanceMatrix.load(str(path))

    def test_truncated(self, tmp_path):
        path = str(tmp_path / 'd.bin')
        dtw.DistanceMatrix(np.zeros((4, 4))).save(path)
        with open(path, 'rb') as f:
            blob = f.read()
        with open(path, 'wb') as f:
            f.write(blob[:-8])
        with pytest.raises(exceptions.DataError):
            dtw.DistanceMatrix.load(path)

    def test_to_csv(self, tmp_path):
        path = str(tmp_path / 'd.csv')
        dtw.DistanceMatrix(np.array([[0.0, 2.5], [2.5, 0.0]])).to_csv(path)
        table = pd.read_csv(path, index_col=0)
        assert table.shape == (2, 2)
        assert table.iloc[0, 1] == 2.5


@pytest.mark.slow
class TestFullSizeMatrix(object):

    def test_two_thousand_profiles(self):
        rng = np.random.default_rng(0)
        hours = rng.gamma(2.0, 3.0, size=(2000, 24))
        one = dtw.distance_matrix(hours, threads=1)
        for threads in (4, 8):
            np.testing.assert_array_equal(
                dtw.distance_matrix(hours, threads=threads).values,
                one.values)
