"""
k-medoids clustering over a precomputed distance matrix.

:func:`solve_exact` finds a globally optimal medoid set of the p-median
problem with :class:`BranchAndBound`; :func:`solve_pam` is the BUILD + SWAP
local search used both as the incumbent heuristic and as a stand-alone
solver.
"""

import json
import logging
import time

import numba

import numpy as np

import pandas as pd

import sklearn.metrics

import loadlab.exceptions as exceptions
import loadlab.utils as utils

_log = logging.getLogger(__name__)

ARCHETYPE_NAMES = ['low_use', 'moderate_use', 'nighttime_use', 'single_peak',
                   'double_peak']

DEFAULT_TIME_LIMIT = 600.0
DEFAULT_RESTARTS = 5
_REL_TOL = 1e-9


class ClusterModel(object):
    """
    A medoid set and the nearest-medoid assignment it induces.

    :ivar k: number of clusters
    :ivar medoid_indices: sorted indices of the medoids into the clustered set
    :ivar labels: cluster of each member, an index into ``medoid_indices``
    :ivar total_cost: sum of member-to-medoid distances
    :ivar silhouette: mean silhouette coefficient, None until computed
    :ivar proven_optimal: True when the medoid set is a proven optimum
    :ivar gap: relative optimality gap, None for heuristic solutions
    :ivar solver: name of the solver that produced the model
    :ivar names: cluster names, None until named
    :ivar medoid_keys: ``household_id``/``date`` dicts of the medoids
    :ivar medoid_hours: ``(k, 24)`` hourly energies of the medoids
    :ivar provenance: versions, seed and input hashes the model was built
                      from, None when unknown
    """

    def __init__(self, k, medoid_indices, labels, total_cost,
                 silhouette=None, proven_optimal=False, gap=None,
                 solver=None, names=None, medoid_keys=None,
                 medoid_hours=None, provenance=None):
        self.k = int(k)
        self.medoid_indices = np.asarray(medoid_indices, dtype=np.int64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.total_cost = float(total_cost)
        self.silhouette = silhouette
        self.proven_optimal = bool(proven_optimal)
        self.gap = gap
        self.solver = solver
        self.names = names
        self.medoid_keys = medoid_keys
        self.medoid_hours = medoid_hours
        self.provenance = provenance

    def __repr__(self):
        return ('ClusterModel(k={}, medoids={}, cost={:.6g}, proven={})'
                .format(self.k, self.medoid_indices.tolist(),
                        self.total_cost, self.proven_optimal))

    @property
    def assignments(self):
        """Medoid index of every member."""
        return self.medoid_indices[self.labels]

    def label_names(self):
        names = self.names or ['cluster_{}'.format(c) for c in range(self.k)]
        return [names[c] for c in self.labels]

    def attach_profiles(self, keys, hours):
        """Record medoid keys and hourly energies from the clustered set."""
        rows = self.medoid_indices
        self.medoid_keys = [
            {'household_id': str(h), 'date': str(d)} for h, d in zip(
                keys['household_id'].to_numpy()[rows],
                keys['date'].to_numpy()[rows])]
        self.medoid_hours = np.asarray(hours)[rows].tolist()

    def to_dict(self):
        return {
            'k': self.k,
            'medoids': self.medoid_keys,
            'medoid_indices': self.medoid_indices.tolist(),
            'medoid_hours': self.medoid_hours,
            'names': self.names,
            'labels': self.labels.tolist(),
            'total_cost': self.total_cost,
            'silhouette': self.silhouette,
            'proven_optimal': self.proven_optimal,
            'gap': self.gap,
            'solver': self.solver,
            'provenance': self.provenance,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data['k'], data['medoid_indices'], data['labels'],
                   data['total_cost'], silhouette=data.get('silhouette'),
                   proven_optimal=data.get('proven_optimal', False),
                   gap=data.get('gap'), solver=data.get('solver'),
                   names=data.get('names'), medoid_keys=data.get('medoids'),
                   medoid_hours=data.get('medoid_hours'),
                   provenance=data.get('provenance'))

    def to_json(self, path):
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _as_array(D):
    values = getattr(D, 'values', D)
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise exceptions.SolverError('distance matrix must be square')
    if not np.isfinite(values).all():
        raise exceptions.SolverError('distance matrix has non-finite entries')
    return values


def _check_k(k, p):
    if not 1 <= k <= p:
        raise exceptions.SolverError(
            'k must be in [1, {}], got {}'.format(p, k))


def _tolerance(value):
    return _REL_TOL * max(1.0, abs(value))


def assign_to_medoids(D, medoids):
    """
    Nearest-medoid labels and the total cost of a medoid set.

    Ties go to the lowest medoid index and every medoid serves itself.
    """
    medoids = np.sort(np.asarray(medoids, dtype=np.int64))
    sub = D[medoids]
    labels = np.argmin(sub, axis=0)
    labels[medoids] = np.arange(len(medoids))
    cost = float(sub[labels, np.arange(D.shape[1])].sum())
    return medoids, labels, cost


def _model(D, medoids, solver, proven_optimal=False, gap=None):
    medoids, labels, cost = assign_to_medoids(D, medoids)
    return ClusterModel(len(medoids), medoids, labels, cost,
                        proven_optimal=proven_optimal, gap=gap, solver=solver)


def _better(cost, medoids, best_cost, best_medoids):
    if best_medoids is None:
        return True
    tol = _tolerance(best_cost)
    if cost < best_cost - tol:
        return True
    return cost <= best_cost + tol and tuple(medoids) < tuple(best_medoids)


@numba.njit(nogil=True, cache=True)
def _column_min(D, mask):
    p = D.shape[1]
    out = np.full(p, np.inf)
    for i in range(D.shape[0]):
        if mask[i]:
            for j in range(p):
                if D[i, j] < out[j]:
                    out[j] = D[i, j]
    return out


@numba.njit(nogil=True, cache=True)
def _pam_build(D, k):
    p = D.shape[0]
    chosen = np.zeros(p, dtype=np.bool_)
    near = np.empty(p)
    first = 0
    best = np.inf
    for i in range(p):
        total = D[i].sum()
        if total < best:
            best = total
            first = i
    chosen[first] = True
    near[:] = D[first]
    for _ in range(k - 1):
        pick = -1
        best_gain = -1.0
        for c in range(p):
            if chosen[c]:
                continue
            gain = 0.0
            for j in range(p):
                if D[c, j] < near[j]:
                    gain += near[j] - D[c, j]
            if gain > best_gain:
                best_gain = gain
                pick = c
        chosen[pick] = True
        for j in range(p):
            if D[pick, j] < near[j]:
                near[j] = D[pick, j]
    return np.flatnonzero(chosen)


@numba.njit(nogil=True, cache=True)
def _pam_swap(D, medoids, max_iter):
    p = D.shape[0]
    k = medoids.shape[0]
    medoids = np.sort(medoids.copy())
    is_medoid = np.zeros(p, dtype=np.bool_)
    for m in medoids:
        is_medoid[m] = True
    near = np.empty(p)
    second = np.empty(p)
    owner = np.empty(p, dtype=np.int64)
    for _ in range(max_iter):
        for j in range(p):
            near[j] = np.inf
            second[j] = np.inf
            owner[j] = -1
            for mi in range(k):
                d = D[medoids[mi], j]
                if d < near[j]:
                    second[j] = near[j]
                    near[j] = d
                    owner[j] = mi
                elif d < second[j]:
                    second[j] = d
        scale = max(1.0, near.sum())
        best_delta = -1e-12 * scale
        best_mi = -1
        best_h = -1
        for mi in range(k):
            for h in range(p):
                if is_medoid[h]:
                    continue
                delta = 0.0
                for j in range(p):
                    if owner[j] == mi:
                        delta += min(second[j], D[h, j]) - near[j]
                    elif D[h, j] < near[j]:
                        delta += D[h, j] - near[j]
                if delta < best_delta:
                    best_delta = delta
                    best_mi = mi
                    best_h = h
        if best_mi < 0:
            break
        is_medoid[medoids[best_mi]] = False
        is_medoid[best_h] = True
        medoids[best_mi] = best_h
        medoids = np.sort(medoids)
    return medoids


def solve_pam(D, k, seed=0, restarts=DEFAULT_RESTARTS, max_iter=1000):
    """
    Greedy BUILD followed by best-improvement SWAP.

    The first run starts from BUILD, further runs from seeded random medoid
    sets. The cheapest result wins, ties to the lexicographically smaller
    medoid set.

    :param D: distance matrix (array or :class:`loadlab.dtw.DistanceMatrix`)
    :param k: number of medoids
    :param seed: RNG seed for the random restarts
    :param restarts: total number of SWAP runs, at least 1
    :returns: :class:`ClusterModel`, never flagged optimal
    """
    D = _as_array(D)
    p = D.shape[0]
    _check_k(k, p)
    starts = [_pam_build(D, k)]
    for r in range(1, max(1, restarts)):
        rng = utils.child_seed(seed, r)
        starts.append(np.sort(rng.choice(p, size=k, replace=False)))

    best_cost, best_medoids = None, None
    for start in starts:
        medoids = _pam_swap(D, np.asarray(start, dtype=np.int64), max_iter)
        medoids, _, cost = assign_to_medoids(D, medoids)
        if _better(cost, medoids, best_cost, best_medoids):
            best_cost, best_medoids = cost, medoids
    model = _model(D, best_medoids, 'pam')
    _log.debug('pam k=%d cost=%.6g over %d starts', k, model.total_cost,
               len(starts))
    return model


@numba.njit(nogil=True, cache=True)
def _lagrangian(D, chosen, free, r, lam0, ub, iterations, theta):
    """
    Subgradient ascent on the relaxation of the assignment constraints.

    Returns the best bound, its multipliers and the per-candidate reduced
    costs at those multipliers.
    """
    p = D.shape[0]
    lam = lam0.copy()
    best = -np.inf
    best_lam = lam.copy()
    best_rho = np.zeros(p)
    rho = np.zeros(p)
    g = np.empty(p)
    free_idx = np.flatnonzero(free)
    stall = 0
    for _ in range(iterations):
        for i in range(p):
            rho[i] = 0.0
            if chosen[i] or free[i]:
                s = 0.0
                for j in range(p):
                    v = D[i, j] - lam[j]
                    if v < 0.0:
                        s += v
                rho[i] = s
        value = lam.sum()
        for i in range(p):
            if chosen[i]:
                value += rho[i]
        order = np.argsort(rho[free_idx], kind='mergesort')
        for t in range(r):
            value += rho[free_idx[order[t]]]
        if value > best:
            best = value
            best_lam[:] = lam
            best_rho[:] = rho
            stall = 0
        else:
            stall += 1
            if stall >= 3:
                theta *= 0.5
                stall = 0
        if value >= ub:
            break
        g[:] = 1.0
        for i in range(p):
            if chosen[i]:
                for j in range(p):
                    if D[i, j] < lam[j]:
                        g[j] -= 1.0
        for t in range(r):
            i = free_idx[order[t]]
            for j in range(p):
                if D[i, j] < lam[j]:
                    g[j] -= 1.0
        norm = (g * g).sum()
        if norm == 0.0:
            break
        step = theta * (ub - value) / norm
        for j in range(p):
            lam[j] += step * g[j]
    return best, best_lam, best_rho


class BranchAndBound(object):
    """
    Exact p-median solver.

    Depth-first search over medoid inclusion in ascending index order,
    include branch first, so complete medoid sets are met in lexicographic
    order. The incumbent starts from :func:`solve_pam`. Each node is bounded
    by the larger of a counting bound (every member takes its cheapest
    still-possible medoid, the r members with the dearest such cost may open
    themselves) and a Lagrangian bound on the assignment constraints, whose
    reduced costs also close candidates that cannot be part of an improving
    solution.

    :param root_iterations: subgradient steps at the root
    :param node_iterations: subgradient steps at other nodes
    :param pam_restarts: restarts for the incumbent heuristic
    :param seed: seed for the incumbent heuristic
    """

    name = 'exact'

    def __init__(self, root_iterations=60, node_iterations=10,
                 pam_restarts=DEFAULT_RESTARTS, seed=0):
        self.root_iterations = root_iterations
        self.node_iterations = node_iterations
        self.pam_restarts = pam_restarts
        self.seed = seed
        self.nodes = 0

    def solve(self, D, k, time_limit=DEFAULT_TIME_LIMIT):
        D = _as_array(D)
        p = D.shape[0]
        _check_k(k, p)
        if k == p:
            return _model(D, np.arange(p), self.name, True, 0.0)

        started = time.monotonic()
        deadline = None if time_limit is None else started + time_limit
        incumbent = solve_pam(D, k, seed=self.seed,
                              restarts=self.pam_restarts)
        self._ub = incumbent.total_cost
        self._best = incumbent.medoid_indices
        self._from_search = False

        self._D = D
        self._Dinf = D.copy()
        np.fill_diagonal(self._Dinf, np.inf)
        self._k = k
        self.nodes = 0

        root_lam = self._Dinf.min(axis=0)
        root = (np.zeros(p, dtype=np.bool_), np.ones(p, dtype=np.bool_),
                root_lam, 0.0)
        stack = [root]
        timed_out = False
        while stack:
            if deadline is not None and time.monotonic() > deadline:
                timed_out = True
                break
            self._expand(stack.pop(), stack)

        if timed_out:
            lower = min(min(node[3] for node in stack), self._ub)
            gap = (self._ub - lower) / self._ub if self._ub > 0 else 0.0
            proven = gap <= 0.0
        else:
            gap, proven = 0.0, True
        model = _model(D, self._best, self.name, proven, max(0.0, gap))
        _log.info('exact k=%d cost=%.6g nodes=%d proven=%s gap=%.4g in %.2fs',
                  k, model.total_cost, self.nodes, proven, model.gap,
                  time.monotonic() - started)
        return model

    def _pruned(self, bound):
        tol = _tolerance(self._ub)
        if self._from_search:
            # later sets are lexicographically larger, ties cannot win
            return bound >= self._ub - tol
        return bound > self._ub + tol

    def _leaf(self, mask):
        medoids = np.flatnonzero(mask)
        cost = float(_column_min(self._D, mask).sum())
        if _better(cost, medoids, self._ub, self._best) or \
                tuple(medoids) == tuple(self._best):
            if cost < self._ub:
                self._ub = cost
            self._best = medoids
            self._from_search = True

    def _counting_bound(self, chosen, free, r):
        base = np.minimum(_column_min(self._D, chosen),
                          _column_min(self._Dinf, free))
        alt = base[free]
        return float(base.sum() - np.sort(alt)[len(alt) - r:].sum())

    def _expand(self, node, stack):
        chosen, allowed, lam, parent_bound = node
        if self._pruned(parent_bound):
            return
        self.nodes += 1
        free = allowed & ~chosen
        r = self._k - int(chosen.sum())
        n_free = int(free.sum())
        if n_free < r:
            return
        if r == 0:
            self._leaf(chosen)
            return
        if n_free == r:
            self._leaf(allowed)
            return

        bound = max(parent_bound, self._counting_bound(chosen, free, r))
        if self._pruned(bound):
            return
        iterations = (self.root_iterations if not chosen.any() and
                      allowed.all() else self.node_iterations)
        lagrangian, lam, rho = _lagrangian(self._D, chosen, free, r, lam,
                                           self._ub, iterations, 2.0)
        bound = max(bound, lagrangian)
        if self._pruned(bound):
            return

        # a candidate outside the r cheapest would displace the r-th one
        free_idx = np.flatnonzero(free)
        order = np.argsort(rho[free_idx], kind='mergesort')
        rth = rho[free_idx[order[r - 1]]]
        outside = free_idx[order[r:]]
        closed = outside[[self._pruned(lagrangian - rth + rho[i])
                          for i in outside]] if len(outside) else outside
        if len(closed):
            allowed = allowed.copy()
            allowed[closed] = False
            free = allowed & ~chosen
            n_free = int(free.sum())
            if n_free == r:
                self._leaf(allowed)
                return

        i = int(np.flatnonzero(free)[0])
        excluded = allowed.copy()
        excluded[i] = False
        included = chosen.copy()
        included[i] = True
        stack.append((chosen, excluded, lam, bound))
        stack.append((included, allowed, lam, bound))


def solve_exact(D, k, time_limit=DEFAULT_TIME_LIMIT, solver=None):
    """
    Globally optimal k-medoids.

    Among equal-cost optima the lexicographically smallest medoid set is
    returned. When ``time_limit`` runs out the best incumbent comes back
    with ``proven_optimal=False`` and its relative gap.

    :param solver: object with ``solve(D, k, time_limit)`` returning a
                   :class:`ClusterModel`; defaults to :class:`BranchAndBound`
    """
    if solver is None:
        solver = BranchAndBound()
    return solver.solve(D, k, time_limit)


def silhouette(D, labels):
    """
    Mean silhouette coefficient over a precomputed distance matrix.

    Members of singleton clusters and members with a = b = 0 score 0.
    """
    D = _as_array(D)
    labels = np.asarray(labels)
    clusters, counts = np.unique(labels, return_counts=True)
    if len(clusters) < 2:
        raise exceptions.SolverError('silhouette needs at least 2 clusters')
    if len(clusters) == len(labels):
        return 0.0
    scores = sklearn.metrics.silhouette_samples(D, labels,
                                                metric='precomputed')
    singletons = clusters[counts == 1]
    scores[np.isin(labels, singletons)] = 0.0
    return float(np.nan_to_num(scores).mean())


def _solve(D, k, solver, time_limit, seed, restarts):
    if solver == 'pam':
        return solve_pam(D, k, seed=seed, restarts=restarts)
    if solver == 'exact':
        return solve_exact(D, k, time_limit,
                           BranchAndBound(pam_restarts=restarts, seed=seed))
    if isinstance(solver, str):
        raise ValueError('unknown solver "{}"'.format(solver))
    return solve_exact(D, k, time_limit, solver)


def k_sweep(D, k_min=2, k_max=8, time_limit=DEFAULT_TIME_LIMIT,
            solver='exact', select_k=None, seed=0,
            restarts=DEFAULT_RESTARTS):
    """
    Solve for every k in ``[k_min, k_max]`` and pick one.

    The default choice is the silhouette argmax, smaller k on ties.

    :param solver: ``'exact'``, ``'pam'`` or a solver object
    :param select_k: chosen k overriding the silhouette rule
    :returns: tuple of (chosen k, {k: :class:`ClusterModel`})
    """
    D = _as_array(D)
    p = D.shape[0]
    if k_min < 1 or k_max < k_min:
        raise exceptions.SolverError(
            'invalid k range {}:{}'.format(k_min, k_max))
    if k_max > p:
        raise exceptions.SolverError(
            'k_max {} exceeds the {} clustered profiles'.format(k_max, p))
    models = {}
    for k in range(k_min, k_max + 1):
        model = _solve(D, k, solver, time_limit, seed, restarts)
        model.silhouette = silhouette(D, model.labels) if k > 1 else None
        models[k] = model
        _log.info('k=%d cost=%.6g silhouette=%s', k, model.total_cost,
                  model.silhouette)
    if select_k is not None:
        if select_k not in models:
            raise exceptions.SolverError(
                'selected k={} is outside the sweep'.format(select_k))
        return select_k, models
    scored = [k for k in models if models[k].silhouette is not None]
    if not scored:
        return k_min, models
    best = max(scored, key=lambda k: (models[k].silhouette, -k))
    return best, models


def sweep_frame(models):
    """One row per k: total_cost, silhouette, proven_optimal, gap."""
    return pd.DataFrame([{
        'k': k,
        'total_cost': m.total_cost,
        'silhouette': m.silhouette,
        'proven_optimal': m.proven_optimal,
        'gap': m.gap,
    } for k, m in sorted(models.items())],
        columns=['k', 'total_cost', 'silhouette', 'proven_optimal', 'gap'])


def name_clusters(model, hours):
    """
    Name clusters by ascending mean daily energy of their members.

    Five clusters take the archetype names, otherwise ``cluster_<rank>``.

    :param model: :class:`ClusterModel`
    :param hours: ``(p, 24)`` hourly energies of the clustered profiles
    :returns: list of names indexed by cluster
    """
    totals = np.asarray(hours, dtype=np.float64).sum(axis=1)
    means = np.array([totals[model.labels == c].mean()
                      for c in range(model.k)])
    ranks = np.empty(model.k, dtype=np.int64)
    ranks[np.argsort(means, kind='stable')] = np.arange(model.k)
    if model.k == len(ARCHETYPE_NAMES):
        names = [ARCHETYPE_NAMES[r] for r in ranks]
    else:
        names = ['cluster_{}'.format(r) for r in ranks]
    model.names = names
    return names
