"""
Two-stage stratified downsampling of daily profiles.

Daily totals of the complete profiles are cut into strata at their empirical
quantiles. Stage one picks a few days per household so that the pooled pick
follows the global stratum masses, stage two cuts the pooled pick down to an
exact size with the same quotas.
"""

import logging

import numpy as np

import scipy.stats

import loadlab.exceptions as exceptions
import loadlab.profiles as profiles
import loadlab.utils as utils

_log = logging.getLogger(__name__)

DEFAULT_BINS = 10


class StratificationPlan(object):
    """
    Consumption strata and their quotas.

    Bins are ``[0, t1), [t1, t2), ..., [t_last, inf)`` for the inner
    thresholds ``t``; a plan without thresholds has a single bin.

    :ivar bin_edges: strictly increasing inner thresholds in Wh
    :ivar bin_mass: share of the population in each bin
    :ivar per_bin_quota: profiles per bin for ``target``
    :ivar target: requested sample size
    :ivar seed: RNG seed
    """

    def __init__(self, bin_edges, bin_mass, target, seed):
        self.bin_edges = np.asarray(bin_edges, dtype=np.float64)
        self.bin_mass = np.asarray(bin_mass, dtype=np.float64)
        if np.any(np.diff(self.bin_edges) <= 0):
            raise ValueError('bin edges must be strictly increasing')
        if len(self.bin_mass) != len(self.bin_edges) + 1:
            raise ValueError('need one mass entry per bin')
        self.target = int(target)
        self.seed = int(seed)
        self.per_bin_quota = self.quotas_for(self.target)

    @property
    def n_bins(self):
        return len(self.bin_mass)

    def assign_bins(self, totals):
        """Return the bin index of every daily total."""
        return np.searchsorted(self.bin_edges, np.asarray(totals),
                               side='right')

    def quotas_for(self, n):
        """Split ``n`` profiles over the bins by largest remainder."""
        return utils.largest_remainder(self.bin_mass, n)

    def draw_quotas(self, n, rng):
        """
        Split ``n`` profiles over the bins at random, with the expected
        count of every bin exactly ``n`` times its mass.
        """
        return utils.randomised_rounding(self.bin_mass, n, rng)

    def __repr__(self):
        return ('StratificationPlan(n_bins={}, target={}, quota={})'.format(
            self.n_bins, self.target, self.per_bin_quota.tolist()))


def _complete(frame):
    return frame[frame['complete'].to_numpy(bool)]


def build_plan(frame, n_bins, target, seed):
    """
    Derive consumption strata from a profile table.

    Only complete profiles count towards the distribution.

    :param frame: profile table
    :param n_bins: number of quantile bins requested
    :param target: final sample size
    :param seed: RNG seed carried by the plan
    :returns: :class:`StratificationPlan`
    """
    if n_bins < 1:
        raise ValueError('n_bins must be >= 1')
    totals = profiles.daily_totals(_complete(frame))
    if len(totals) == 0:
        raise exceptions.DataError('no complete profiles to stratify')
    if target > len(totals):
        raise exceptions.DataError(
            'target {} exceeds the {} complete profiles available'.format(
                target, len(totals)))
    quantiles = np.quantile(totals, np.arange(1, n_bins) / float(n_bins))
    edges = np.unique(quantiles)
    # a threshold at or below the minimum would leave its lower bin empty
    edges = edges[edges > totals.min()]
    counts = np.bincount(np.searchsorted(edges, totals, side='right'),
                         minlength=len(edges) + 1)
    plan = StratificationPlan(edges, counts / float(len(totals)), target,
                              seed)
    _log.info('stratified %d profiles into %d bins, quotas %s',
              len(totals), plan.n_bins, plan.per_bin_quota.tolist())
    return plan


def _redistribute(quota, available):
    """
    Cap quotas at the members available, moving each shortfall unit to the
    nearest bin with spare members (lower bin first on ties).
    """
    quota = np.asarray(quota, dtype=np.int64)
    available = np.asarray(available, dtype=np.int64)
    alloc = np.minimum(quota, available)
    n = len(quota)
    for b in range(n):
        for _ in range(int(quota[b] - alloc[b])):
            for distance in range(1, n):
                for j in (b - distance, b + distance):
                    if 0 <= j < n and alloc[j] < available[j]:
                        alloc[j] += 1
                        break
                else:
                    continue
                break
    return alloc


def _draw(bins, alloc, rng):
    """Pick ``alloc[b]`` positions uniformly from every bin ``b``."""
    chosen = []
    for b, count in enumerate(alloc):
        if count == 0:
            continue
        members = np.flatnonzero(bins == b)
        chosen.append(rng.choice(members, size=int(count), replace=False))
    if not chosen:
        return np.empty(0, dtype=np.int64)
    return np.sort(np.concatenate(chosen))


def stage_one(frame, days_per_household, plan, seed):
    """
    Select up to ``days_per_household`` complete days from every household.

    Each household draws its own bin counts so that, pooled over
    households, every bin gets the plan's share of the pick in
    expectation. Strata the household never visits hand their share to
    its nearest populated strata. Households with fewer complete days than
    requested contribute all of them.

    :param frame: profile table
    :param days_per_household: days to keep per household
    :param plan: :class:`StratificationPlan`
    :param seed: RNG seed
    :returns: profile table of the selected days
    """
    if days_per_household < 1:
        raise ValueError('days_per_household must be >= 1')
    complete = profiles.sort_frame(_complete(frame))
    totals = profiles.daily_totals(complete)
    bins = plan.assign_bins(totals)
    households = complete['household_id'].to_numpy()
    ids, starts = np.unique(households, return_index=True)
    stops = np.append(starts[1:], len(households))

    picked = []
    exhausted = 0
    for position, (start, stop) in enumerate(zip(starts, stops)):
        n_days = stop - start
        if n_days <= days_per_household:
            picked.append(np.arange(start, stop))
            exhausted += n_days < days_per_household
            continue
        own = bins[start:stop]
        available = np.bincount(own, minlength=plan.n_bins)
        rng = utils.child_seed(seed, position)
        alloc = _redistribute(plan.draw_quotas(days_per_household, rng),
                              available)
        picked.append(start + _draw(own, alloc, rng))

    rows = np.concatenate(picked) if picked else np.empty(0, dtype=np.int64)
    selected = complete.iloc[rows].reset_index(drop=True)
    if exhausted:
        _log.warning('%d households had fewer than %d complete days',
                     exhausted, days_per_household)
    _log.info('stage one kept %d profiles from %d households',
              len(selected), len(ids))
    return selected


def stage_two(subset, plan, target, seed):
    """
    Cut ``subset`` down to exactly ``target`` profiles.

    Every bin is sampled uniformly to its quota; bins short of members
    pass the shortfall to their nearest neighbours.
    """
    if target > len(subset):
        raise exceptions.DataError(
            'target {} exceeds the subset of {} profiles'.format(
                target, len(subset)))
    subset = profiles.sort_frame(subset)
    if target == len(subset):
        return subset
    bins = plan.assign_bins(profiles.daily_totals(subset))
    available = np.bincount(bins, minlength=plan.n_bins)
    alloc = _redistribute(plan.quotas_for(target), available)
    rows = _draw(bins, alloc, utils.child_seed(seed))
    selected = subset.iloc[rows].reset_index(drop=True)
    _log.info('stage two kept %d of %d profiles', len(selected), len(subset))
    return selected


def ks_statistic(a, b):
    """Two-sample Kolmogorov-Smirnov distance between two samples."""
    return float(scipy.stats.ks_2samp(np.asarray(a), np.asarray(b)).statistic)


def two_stage_sample(frame, days_per_household, target,
                     n_bins=DEFAULT_BINS, seed=0):
    """
    Run both stages with one plan.

    :returns: tuple of (plan, stage one subset, final sample)
    """
    plan = build_plan(frame, n_bins, target, seed)
    subset = stage_one(frame, days_per_household, plan, seed)
    final = stage_two(subset, plan, target, seed)
    _log.info('KS distance subset vs sample: %.4f',
              ks_statistic(profiles.daily_totals(subset),
                           profiles.daily_totals(final)))
    return plan, subset, final

