"""
Tests for `loadlab.cluster`.
"""

import itertools

import mock

import numpy as np

import pytest

import loadlab.cluster as cluster
import loadlab.dtw as dtw
import loadlab.exceptions as exceptions


def _random_matrix(rng, p, integer=False):
    if integer:
        a = rng.integers(0, 6, size=(p, p)).astype(float)
    else:
        a = rng.random((p, p))
    D = a + a.T
    np.fill_diagonal(D, 0.0)
    return D


def _brute_force(D, k):
    """Cheapest cost and the lexicographically first set reaching it."""
    best_cost, best_set = np.inf, None
    for medoids in itertools.combinations(range(len(D)), k):
        cost = D[list(medoids)].min(axis=0).sum()
        if cost < best_cost:
            best_cost, best_set = cost, medoids
    return best_cost, best_set


def _assert_valid(D, model, k):
    medoids = model.medoid_indices
    assert len(set(medoids.tolist())) == k
    assert list(medoids) == sorted(medoids)
    assert len(model.labels) == len(D)
    assert set(model.labels.tolist()) <= set(range(k))
    # each medoid serves itself
    assert model.labels[medoids].tolist() == list(range(k))
    assigned = D[model.assignments, np.arange(len(D))]
    np.testing.assert_allclose(assigned, D[medoids].min(axis=0))
    assert model.total_cost == pytest.approx(assigned.sum())


@pytest.fixture
def instances():
    rng = np.random.default_rng(2024)
    out = []
    for n in range(50):
        p = int(rng.integers(5, 15))
        k = int(rng.choice([2, 3, 4]))
        out.append((_random_matrix(rng, p, integer=n % 2 == 0), k))
    return out


@pytest.fixture
def grouped():
    """Three tight groups of 24-hour profiles far apart."""
    rng = np.random.default_rng(8)
    rows = []
    for level in (5.0, 30.0, 80.0):
        for _ in range(6):
            rows.append(level + rng.normal(0.0, 0.5, 24))
    return dtw.distance_matrix(np.array(rows), threads=2).values


class TestSolveExact(object):

    def test_matches_brute_force(self, instances):
        for D, k in instances:
            model = cluster.solve_exact(D, k, time_limit=None)
            cost, medoids = _brute_force(D, k)
            assert model.proven_optimal
            assert model.gap == 0.0
            assert model.total_cost == pytest.approx(cost, rel=1e-9)
            _assert_valid(D, model, k)

    def test_lexicographic_tie_break(self, instances):
        # integer matrices have many equal-cost optima
        for D, k in instances[::2]:
            model = cluster.solve_exact(D, k, time_limit=None)
            assert tuple(model.medoid_indices) == _brute_force(D, k)[1]

    def test_k_equals_p(self):
        D = _random_matrix(np.random.default_rng(0), 6)
        model = cluster.solve_exact(D, 6)
        assert model.total_cost == 0.0
        assert model.medoid_indices.tolist() == list(range(6))
        assert model.labels.tolist() == list(range(6))

    def test_single_medoid_is_min_row_sum(self):
        D = np.array([[0.0, 1.0, 5.5, 0.5],
                      [1.0, 0.0, 1.0, 3.0],
                      [5.5, 1.0, 0.0, 2.5],
                      [0.5, 3.0, 2.5, 0.0]])
        assert D.sum(axis=1).tolist() == [7.0, 5.0, 9.0, 6.0]
        model = cluster.solve_exact(D, 1)
        assert model.medoid_indices.tolist() == [1]
        assert model.total_cost == 5.0

    def test_k_too_large(self):
        with pytest.raises(exceptions.SolverError):
            cluster.solve_exact(np.zeros((3, 3)), 4)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(3)
        D = _random_matrix(rng, 12)
        perm = rng.permutation(12)
        a = cluster.solve_exact(D, 3)
        b = cluster.solve_exact(D[np.ix_(perm, perm)], 3)
        assert a.total_cost == pytest.approx(b.total_cost)
        assert sorted(perm[b.medoid_indices]) == a.medoid_indices.tolist()

    def test_scaling_invariant(self):
        D = _random_matrix(np.random.default_rng(4), 11)
        a = cluster.solve_exact(D, 3)
        b = cluster.solve_exact(D * 7.5, 3)
        assert b.total_cost == pytest.approx(7.5 * a.total_cost)
        assert b.medoid_indices.tolist() == a.medoid_indices.tolist()

    def test_nearest_medoid_consistency(self):
        D = _random_matrix(np.random.default_rng(5), 13)
        model = cluster.solve_exact(D, 4)
        for j in range(13):
            for c in range(4):
                moved = model.total_cost - D[model.assignments[j], j] + \
                    D[model.medoid_indices[c], j]
                assert moved >= model.total_cost - 1e-12

    def test_time_limit_reports_gap(self):
        D = _random_matrix(np.random.default_rng(6), 40)
        with mock.patch('loadlab.cluster.time.monotonic',
                        side_effect=[0.0, 100.0, 100.0]):
            model = cluster.solve_exact(D, 4, time_limit=1.0)
        assert not model.proven_optimal
        assert model.gap == 1.0
        _assert_valid(D, model, 4)

    def test_pluggable_solver(self):
        solver = mock.Mock()
        solver.solve.return_value = 'model'
        assert cluster.solve_exact('D', 3, 10, solver=solver) == 'model'
        solver.solve.assert_called_once_with('D', 3, 10)

    def test_accepts_distance_matrix(self, grouped):
        model = cluster.solve_exact(dtw.DistanceMatrix(grouped), 3)
        assert sorted(np.bincount(model.labels).tolist()) == [6, 6, 6]


class TestSolvePam(object):

    def test_never_better_than_exact(self, instances):
        matches = 0
        for n, (D, k) in enumerate(instances):
            pam = cluster.solve_pam(D, k, seed=n)
            exact = cluster.solve_exact(D, k)
            assert pam.total_cost >= exact.total_cost - 1e-9
            assert not pam.proven_optimal
            _assert_valid(D, pam, k)
            matches += pam.total_cost == pytest.approx(exact.total_cost)
        assert matches >= 40

    def test_single_medoid_optimal(self, instances):
        for D, _ in instances[:10]:
            assert cluster.solve_pam(D, 1).total_cost == pytest.approx(
                cluster.solve_exact(D, 1).total_cost)

    def test_deterministic(self):
        D = _random_matrix(np.random.default_rng(9), 30)
        a = cluster.solve_pam(D, 4, seed=17, restarts=4)
        b = cluster.solve_pam(D, 4, seed=17, restarts=4)
        assert a.medoid_indices.tolist() == b.medoid_indices.tolist()


class TestSilhouette(object):

    def test_separated_groups(self):
        D = np.array([[0, 0, 5, 5],
                      [0, 0, 5, 5],
                      [5, 5, 0, 0],
                      [5, 5, 0, 0]], dtype=float)
        assert cluster.silhouette(D, [0, 0, 1, 1]) == 1.0

    def test_identical_points(self):
        assert cluster.silhouette(np.zeros((4, 4)), [0, 0, 1, 1]) == 0.0

    def test_singletons_score_zero(self):
        D = np.array([[0, 1, 9],
                      [1, 0, 9],
                      [9, 9, 0]], dtype=float)
        expected = (1 - 1 / 9.0) * 2 / 3
        assert cluster.silhouette(D, [0, 0, 1]) == pytest.approx(expected)

    def test_all_singletons(self):
        assert cluster.silhouette(np.ones((3, 3)) - np.eye(3),
                                  [0, 1, 2]) == 0.0

    def test_single_cluster(self):
        with pytest.raises(exceptions.SolverError):
            cluster.silhouette(np.zeros((3, 3)), [0, 0, 0])

    def test_recovered_beats_random(self, grouped):
        model = cluster.solve_exact(grouped, 3)
        rng = np.random.default_rng(1)
        shuffled = rng.permutation(model.labels)
        assert cluster.silhouette(grouped, model.labels) > \
            cluster.silhouette(grouped, shuffled)


class TestKSweep(object):

    def test_sweep(self, grouped):
        best, models = cluster.k_sweep(grouped, 2, 8, time_limit=None)
        assert sorted(models) == list(range(2, 9))
        assert best == 3
        costs = [models[k].total_cost for k in range(2, 9)]
        assert all(b <= a for a, b in zip(costs, costs[1:]))

    def test_select_override(self, grouped):
        best, _ = cluster.k_sweep(grouped, 2, 4, select_k=4)
        assert best == 4

    def test_select_outside(self, grouped):
        with pytest.raises(exceptions.SolverError):
            cluster.k_sweep(grouped, 2, 4, select_k=7)

    def test_k_max_too_large(self):
        with pytest.raises(exceptions.SolverError):
            cluster.k_sweep(np.zeros((3, 3)), 2, 8)

    def test_ties_prefer_smaller_k(self):
        models = {}

        def fake(D, k, solver, time_limit, seed, restarts):
            models[k] = cluster.ClusterModel(k, range(k), [0] * len(D), 0.0)
            return models[k]

        with mock.patch.object(cluster, '_solve', side_effect=fake), \
                mock.patch.object(cluster, 'silhouette', return_value=0.5):
            best, _ = cluster.k_sweep(np.zeros((6, 6)), 2, 5)
        assert best == 2

    def test_pam_sweep_frame(self, grouped):
        _, models = cluster.k_sweep(grouped, 2, 4, solver='pam')
        frame = cluster.sweep_frame(models)
        assert frame['k'].tolist() == [2, 3, 4]
        assert not frame['proven_optimal'].any()

    def test_unknown_solver(self, grouped):
        with pytest.raises(ValueError):
            cluster.k_sweep(grouped, 2, 3, solver='simplex')


class TestNaming(object):

    def test_five_archetypes(self):
        hours = np.repeat(np.array([90.0, 10.0, 50.0, 30.0, 70.0]), 2)
        hours = np.tile(hours[:, None] / 24.0, (1, 24))
        model = cluster.ClusterModel(5, [0, 2, 4, 6, 8],
                                     [0, 0, 1, 1, 2, 2, 3, 3, 4, 4], 0.0)
        names = cluster.name_clusters(model, hours)
        assert names == ['double_peak', 'low_use', 'nighttime_use',
                         'moderate_use', 'single_peak']
        assert model.names == names

    def test_other_k(self):
        hours = np.array([[2.0] * 24, [1.0] * 24, [3.0] * 24])
        model = cluster.ClusterModel(3, [0, 1, 2], [0, 1, 2], 0.0)
        assert cluster.name_clusters(model, hours) == [
            'cluster_1', 'cluster_0', 'cluster_2']


class TestModelJson(object):

    def test_round_trip(self, tmp_path, grouped):
        model = cluster.solve_exact(grouped, 3)
        model.silhouette = cluster.silhouette(grouped, model.labels)
        model.names = ['a', 'b', 'c']
        path = str(tmp_path / 'model.json')
        model.to_json(path)
        loaded = cluster.ClusterModel.from_json(path)
        assert loaded.medoid_indices.tolist() == \
            model.medoid_indices.tolist()
        assert loaded.labels.tolist() == model.labels.tolist()
        assert loaded.names == ['a', 'b', 'c']
        assert loaded.proven_optimal
        assert loaded.label_names()[0] == 'a'
