"""
Longitudinal consumption and payment analytics over labelled daily profiles.

Most functions take a *day table*: one row per labelled household-day as
built by :func:`prepare_days`, carrying the cluster label, the daily energy,
the peak count, the daytime share, the credit state and the household's
appliance metadata.
"""

import json
import logging
import os

import numba

import numpy as np

import pandas as pd

import scipy.stats

import loadlab.assign as assign
import loadlab.ingest as ingest
import loadlab.profiles as profiles

_log = logging.getLogger(__name__)

ECONOMIC_OUTAGE = 'economic_outage'
LOW_USE = 'low_use'

PEAK_FACTOR = 2.0
PEAK_MIN_WH = 10.0
PEAK_MIN_SEPARATION = 2
DAYTIME_HOURS = (6, 18)
APPLIANCE_THRESHOLD_W = 50.0
UR_THRESHOLD = 0.9
UR_BANDS = [(0.0, 0.5), (0.5, 0.9), (0.9, 1.0)]
MIN_HOUSEHOLDS = 10
CONFIDENCE = 0.95
DIRECTION_WINDOWS = [(0, 182), (0, 365), (365, None)]
MIN_WINDOW_DAYS = 14
EARLY_LATE_SPAN = 90


class HouseholdLedger(object):
    """
    Daily credit state of one household.

    :ivar household_id: household key
    :ivar days_remaining: forward-filled credit in days, a
                          :class:`pandas.Series` indexed by ``age_days``
    :ivar dates: local dates of the entries
    """

    def __init__(self, household_id, dates, days_remaining,
                 activation_date=None):
        self.household_id = household_id
        dates = pd.DatetimeIndex(pd.to_datetime(dates))
        if activation_date is None:
            activation_date = dates.min()
        ages = (dates - pd.Timestamp(activation_date)).days
        self.dates = dates
        self.days_remaining = pd.Series(
            np.asarray(days_remaining, dtype=np.float64), index=ages,
            name='days_remaining')

    @property
    def owned_days(self):
        """Days from activation through the last credit record."""
        if len(self.days_remaining) == 0:
            return 0
        return max(int(self.days_remaining.index.max()) + 1,
                   len(self.days_remaining))

    @property
    def economic_outage_days(self):
        return int((self.days_remaining == 0).sum())

    @property
    def utilisation_rate(self):
        if self.owned_days == 0:
            return np.nan
        return (self.owned_days - self.economic_outage_days) / float(
            self.owned_days)

    def __repr__(self):
        return 'HouseholdLedger({}, owned={}, ur={:.3f})'.format(
            self.household_id, self.owned_days, self.utilisation_rate)


class TrendSeries(object):
    """
    A per-age aggregate.

    :ivar table: frame indexed by ``age_days``, always with a
                 ``households`` column
    :ivar variant: name of the population the trend covers
    :ivar min_households: threshold used for :attr:`cutoff_age`
    """

    def __init__(self, table, variant, min_households=MIN_HOUSEHOLDS):
        self.table = table
        self.variant = variant
        self.min_households = min_households

    @property
    def cutoff_age(self):
        """First age with fewer than ``min_households`` households."""
        below = self.table.index[self.table['households'] <
                                 self.min_households]
        return int(below[0]) if len(below) else None

    def __len__(self):
        return len(self.table)


def build_ledgers(credit, meta=None):
    """
    Group forward-filled credit records per household.

    :param credit: :class:`loadlab.ingest.CreditRecord` list or a frame from
                   :func:`loadlab.ingest.credit_frame`
    :param meta: household metadata; ages count from activation when given
    :returns: dict of household id to :class:`HouseholdLedger`
    """
    if not isinstance(credit, pd.DataFrame):
        credit = ingest.credit_frame(credit)
    meta = meta or {}
    ledgers = {}
    for household_id, rows in credit.groupby('household_id', sort=True):
        rows = rows.sort_values('date')
        info = meta.get(household_id)
        ledgers[household_id] = HouseholdLedger(
            household_id, rows['date'], rows['days_remaining'],
            info.activation_date if info is not None else None)
    return ledgers


def ledger_frame(ledgers):
    """Flatten ledgers into ``household_id, date, days_remaining`` rows."""
    parts = [pd.DataFrame({'household_id': ledger.household_id,
                           'date': ledger.dates,
                           'days_remaining': ledger.days_remaining.to_numpy()})
             for ledger in ledgers.values()]
    if not parts:
        return pd.DataFrame({'household_id': pd.Series(dtype=object),
                             'date': pd.Series(dtype='datetime64[ns]'),
                             'days_remaining': pd.Series(dtype=float)})
    return pd.concat(parts, ignore_index=True)


@numba.njit(cache=True)
def _peaks(values, factor, floor, separation):
    mean = values.mean()
    order = np.argsort(-values, kind='mergesort')
    accepted = np.empty(values.shape[0], dtype=np.int64)
    count = 0
    for h in order:
        v = values[h]
        if v < factor * mean or v < floor:
            break
        near = False
        for a in range(count):
            if abs(accepted[a] - h) < separation:
                near = True
                break
        if not near:
            accepted[count] = h
            count += 1
    return count


def detect_peaks(profile, factor=PEAK_FACTOR, floor=PEAK_MIN_WH,
                 separation=PEAK_MIN_SEPARATION):
    """
    Count the peaks of a daily profile.

    A peak hour holds at least ``factor`` times the daily mean and at least
    ``floor`` Wh. Candidates are taken largest first; one within
    ``separation`` hours of an accepted peak is merged into it.

    :param profile: :class:`loadlab.profiles.DailyProfile` or 24 values
    """
    values = getattr(profile, 'hours', profile)
    values = np.ascontiguousarray(values, dtype=np.float64)
    if np.isnan(values).any():
        raise ValueError('peaks need a complete profile')
    return int(_peaks(values, factor, floor, separation))


def peak_counts(hours, factor=PEAK_FACTOR, floor=PEAK_MIN_WH,
                separation=PEAK_MIN_SEPARATION):
    """Peak counts per row, NaN for rows with missing hours."""
    hours = np.ascontiguousarray(hours, dtype=np.float64)
    out = np.full(len(hours), np.nan)
    for i, row in enumerate(hours):
        if not np.isnan(row).any():
            out[i] = _peaks(row, factor, floor, separation)
    return out


def daytime_share(hours, window=DAYTIME_HOURS):
    """Share of each day's energy used in ``[start, stop)`` local hours."""
    hours = np.asarray(hours, dtype=np.float64)
    total = hours.sum(axis=1)
    day = hours[:, window[0]:window[1]].sum(axis=1)
    with np.errstate(invalid='ignore', divide='ignore'):
        return np.where(total > 0, day / total, np.nan)


def prepare_days(labels, frame, ledgers=None, meta=None,
                 daytime=DAYTIME_HOURS):
    """
    Join labels with profile energies, credit state and metadata.

    :param labels: label table from :mod:`loadlab.assign`
    :param frame: profile table covering the labelled days
    :param ledgers: dict of :class:`HouseholdLedger`
    :param meta: dict of :class:`loadlab.ingest.HouseholdMeta`
    :returns: day table
    """
    hours = profiles.hours_matrix(frame)
    complete = frame['complete'].to_numpy(bool)
    energy = pd.DataFrame({
        'household_id': frame['household_id'].to_numpy(),
        'date': frame['date'].to_numpy(),
        'daily_wh': np.where(complete, hours.sum(axis=1), np.nan),
        'peaks': np.where(complete, peak_counts(hours), np.nan),
        'daytime_share': np.where(complete, daytime_share(hours, daytime),
                                  np.nan),
    })
    days = labels[assign.LABEL_COLUMNS[:4]].merge(
        energy, on=['household_id', 'date'], how='left')
    days['weekday'] = days['date'].dt.dayofweek < 5

    credit = ledger_frame(ledgers or {})
    days = days.merge(credit, on=['household_id', 'date'], how='left')
    days['outage'] = days['days_remaining'] == 0
    rates = {h: l.utilisation_rate for h, l in (ledgers or {}).items()}
    days['utilisation_rate'] = days['household_id'].map(rates).astype(float)

    meta = meta or {}
    days['appliance_power_w'] = days['household_id'].map(
        {h: m.appliance_power_w for h, m in meta.items()}).astype(float)
    days['has_tv'] = days['household_id'].map(
        {h: m.has_tv for h, m in meta.items()})
    days['flexible_appliance_count'] = days['household_id'].map(
        {h: m.flexible_appliance_count for h, m in meta.items()}).astype(
            float)
    return days


def _labelled(days):
    return days[days['cluster'] != assign.UNASSIGNED]


def low_use_cluster(days):
    """The cluster named low use, else the one with the lowest mean energy."""
    clusters = set(_labelled(days)['cluster']) - {ECONOMIC_OUTAGE}
    if LOW_USE in clusters:
        return LOW_USE
    means = _labelled(days).groupby('cluster')['daily_wh'].mean()
    means = means.drop(ECONOMIC_OUTAGE, errors='ignore')
    return means.idxmin()


def relabel_outages(days, ledgers, low_use=None):
    """
    Turn low-use days with zero credit into ``economic_outage`` days.

    Low-use days of households without a ledger stay as they are and are
    counted in a warning.
    """
    if low_use is None:
        low_use = low_use_cluster(days)
    out = days.copy()
    is_low = out['cluster'] == low_use
    missing = is_low & ~out['household_id'].isin(list(ledgers))
    if missing.any():
        _log.warning('%d low-use days belong to %d households without a '
                     'credit ledger', int(missing.sum()),
                     out.loc[missing, 'household_id'].nunique())
    if 'days_remaining' not in out.columns:
        out = out.merge(ledger_frame(ledgers), on=['household_id', 'date'],
                        how='left')
        out['outage'] = out['days_remaining'] == 0
    relabel = is_low.to_numpy() & (out['days_remaining'] == 0).to_numpy()
    out.loc[relabel, 'cluster'] = ECONOMIC_OUTAGE
    _log.info('relabelled %d of %d low-use days as economic outage',
              int(relabel.sum()), int(is_low.sum()))
    return out


def _cluster_order(table):
    return table.sort_values('mean_wh', kind='mergesort').index


def cluster_characteristics(days, include_total=False):
    """
    Per-cluster statistics of a day table.

    Columns: count, proportion, mean_wh, mean_peaks, tv_pct, weekday_pct,
    daytime_pct, appliance_power_w. Clusters are ordered by mean energy.
    """
    labelled = _labelled(days)
    grouped = labelled.groupby('cluster')
    table = pd.DataFrame({
        'count': grouped.size(),
        'mean_wh': grouped['daily_wh'].mean(),
        'mean_peaks': grouped['peaks'].mean(),
        'tv_pct': grouped['has_tv'].apply(
            lambda s: 100.0 * s.astype(float).mean()),
        'weekday_pct': 100.0 * grouped['weekday'].mean(),
        'daytime_pct': 100.0 * grouped['daytime_share'].mean(),
        'appliance_power_w': grouped['appliance_power_w'].mean(),
    })
    table.insert(1, 'proportion', table['count'] / float(len(labelled)))
    table = table.loc[_cluster_order(table)]
    if include_total:
        total = pd.DataFrame({
            'count': [len(labelled)],
            'proportion': [1.0],
            'mean_wh': [labelled['daily_wh'].mean()],
            'mean_peaks': [labelled['peaks'].mean()],
            'tv_pct': [100.0 * labelled['has_tv'].astype(float).mean()],
            'weekday_pct': [100.0 * labelled['weekday'].mean()],
            'daytime_pct': [100.0 * labelled['daytime_share'].mean()],
            'appliance_power_w': [labelled['appliance_power_w'].mean()],
        }, index=['total'])
        table = pd.concat([table, total])
    table.index.name = 'cluster'
    return table


def cluster_sizes(subset, days):
    """
    Cluster counts, proportions and mean energy in the clustered subset and
    in the full labelled dataset side by side.

    :param subset: frame with ``cluster`` and ``daily_wh`` per subset member
    :param days: day table of the full dataset
    """
    def sizes(frame, prefix):
        grouped = frame.groupby('cluster')
        out = pd.DataFrame({'count': grouped.size(),
                            'mean_wh': grouped['daily_wh'].mean()})
        out.insert(1, 'proportion', out['count'] / float(len(frame)))
        return out.add_prefix(prefix)

    full = sizes(_labelled(days), 'full_')
    table = sizes(subset, 'subset_').join(full, how='outer')
    table = table.loc[table.sort_values('full_mean_wh',
                                        kind='mergesort').index]
    table.index.name = 'cluster'
    return table


def _split(days, split, threshold_w):
    if split == 'all':
        return days
    if split == 'high':
        return days[days['appliance_power_w'] > threshold_w]
    if split == 'low':
        return days[days['appliance_power_w'] <= threshold_w]
    raise ValueError('unknown split "{}"'.format(split))


def _by_utilisation(days, utilisation, ur_threshold):
    if utilisation is None:
        return days
    if utilisation == 'high':
        return days[days['utilisation_rate'] >= ur_threshold]
    if utilisation == 'low':
        return days[days['utilisation_rate'] < ur_threshold]
    raise ValueError('unknown utilisation segment "{}"'.format(utilisation))


def consumption_trend(days, split='all', exclude_outages=False,
                      threshold_w=APPLIANCE_THRESHOLD_W,
                      confidence=CONFIDENCE, min_households=MIN_HOUSEHOLDS):
    """
    Mean daily energy per age with a normal-approximation confidence band.

    :param split: ``'all'``, ``'high'`` (appliance power above
                  ``threshold_w``) or ``'low'``
    :param exclude_outages: leave zero-credit days out of the mean
    :returns: :class:`TrendSeries` with mean_wh, ci_low, ci_high, std and
              households columns
    """
    selected = _split(days, split, threshold_w)
    selected = selected[np.isfinite(selected['daily_wh'].to_numpy(float))]
    if exclude_outages:
        selected = selected[~selected['outage'].fillna(False).astype(bool)]
    grouped = selected.groupby('age_days')['daily_wh']
    table = pd.DataFrame({'mean_wh': grouped.mean(), 'std': grouped.std(),
                          'households': grouped.size()})
    z = scipy.stats.norm.ppf(0.5 + confidence / 2.0)
    half = z * table['std'] / np.sqrt(table['households'])
    table['ci_low'] = table['mean_wh'] - half
    table['ci_high'] = table['mean_wh'] + half
    table = table[['mean_wh', 'ci_low', 'ci_high', 'std', 'households']]
    variant = split + ('_no_outage' if exclude_outages else '')
    return TrendSeries(table.sort_index(), variant, min_households)


def trend_summary(trend, window=15, horizon=730):
    """
    Peak and decline of a consumption trend.

    The trend is smoothed with a centred rolling mean of ``window`` days.

    :returns: dict with peak_age, peak_wh, horizon_age, horizon_wh and
              reduction (relative drop from the peak)
    """
    smoothed = trend.table['mean_wh'].rolling(
        window, center=True, min_periods=1).mean()
    smoothed = smoothed[smoothed.index <= horizon]
    if smoothed.empty:
        return {'peak_age': None, 'peak_wh': None, 'horizon_age': None,
                'horizon_wh': None, 'reduction': None}
    peak_age = int(smoothed.idxmax())
    horizon_age = int(smoothed.index[-1])
    peak, last = float(smoothed.max()), float(smoothed.iloc[-1])
    return {
        'peak_age': peak_age,
        'peak_wh': peak,
        'horizon_age': horizon_age,
        'horizon_wh': last,
        'reduction': 1.0 - last / peak if peak > 0 else None,
    }


def _slope(group):
    if len(group) < 2 or group['age_days'].nunique() < 2:
        return np.nan
    return scipy.stats.linregress(group['age_days'],
                                  group['daily_wh']).slope


def consumption_direction(days, windows=DIRECTION_WINDOWS,
                          min_days=MIN_WINDOW_DAYS):
    """
    Share of households whose daily energy rises inside each age window.

    A household counts in a window when it has at least ``min_days``
    complete days there; it is rising when the least-squares slope of
    daily energy over age is positive.

    :param windows: ``(start, stop)`` age bounds, ``stop`` None for open
    :returns: frame with start, stop, households, rising_share and
              falling_share
    """
    valid = days[np.isfinite(days['daily_wh'].to_numpy(float))]
    rows = []
    for start, stop in windows:
        inside = valid[valid['age_days'] >= start]
        if stop is not None:
            inside = inside[inside['age_days'] < stop]
        counts = inside.groupby('household_id').size()
        eligible = counts.index[counts >= min_days]
        inside = inside[inside['household_id'].isin(eligible)]
        slopes = inside.groupby('household_id')[['age_days', 'daily_wh']] \
            .apply(_slope).dropna()
        n = len(slopes)
        rows.append({
            'start': start,
            'stop': stop,
            'households': n,
            'rising_share': float((slopes > 0).mean()) if n else np.nan,
            'falling_share': float((slopes < 0).mean()) if n else np.nan,
        })
    return pd.DataFrame(rows, columns=['start', 'stop', 'households',
                                       'rising_share', 'falling_share'])


def reduced_share(days, span=EARLY_LATE_SPAN):
    """
    Share of households whose mean over their last ``span`` days of
    ownership is below the mean over their first ``span`` days.
    """
    valid = days[np.isfinite(days['daily_wh'].to_numpy(float))]
    lower = []
    for _, rows in valid.groupby('household_id'):
        ages = rows['age_days'].to_numpy()
        if ages.max() - ages.min() < 2 * span:
            continue
        early = rows['daily_wh'][ages < ages.min() + span].mean()
        late = rows['daily_wh'][ages > ages.max() - span].mean()
        lower.append(late < early)
    return float(np.mean(lower)) if lower else np.nan


def cluster_allocation_trend(days, split='all', utilisation=None,
                             threshold_w=APPLIANCE_THRESHOLD_W,
                             ur_threshold=UR_THRESHOLD,
                             min_households=MIN_HOUSEHOLDS):
    """
    Fraction of each day's households in every cluster, per age.

    :param split: appliance power split as in :func:`consumption_trend`
    :param utilisation: None, ``'high'`` (rate at least ``ur_threshold``)
                        or ``'low'``
    :returns: :class:`TrendSeries` with one column per cluster plus
              ``households``
    """
    selected = _labelled(_by_utilisation(_split(days, split, threshold_w),
                                         utilisation, ur_threshold))
    variant = split if utilisation is None else 'ur_' + utilisation
    if selected.empty:
        table = pd.DataFrame({'households': pd.Series(dtype=np.int64)},
                             index=pd.Index([], name='age_days'))
        return TrendSeries(table, variant, min_households)
    counts = pd.crosstab(selected['age_days'], selected['cluster'])
    households = counts.sum(axis=1)
    table = counts.div(households, axis=0)
    table['households'] = households
    return TrendSeries(table.sort_index(), variant, min_households)


def dominant_cluster_stats(days):
    """
    Dominant cluster, homogeneity and utilisation of every household.

    The dominant cluster is the modal one; ties go to the cluster with the
    higher mean daily energy.
    """
    labelled = _labelled(days)
    means = labelled.groupby('cluster')['daily_wh'].mean().fillna(-np.inf)
    counts = labelled.groupby(['household_id', 'cluster']).size().rename(
        'n').reset_index()
    counts['mean_wh'] = counts['cluster'].map(means)
    totals = counts.groupby('household_id')['n'].sum()
    top = counts.sort_values(['household_id', 'n', 'mean_wh'],
                             ascending=[True, False, False],
                             kind='mergesort').drop_duplicates('household_id')
    top = top.set_index('household_id')
    per_household = labelled.groupby('household_id').first()
    table = pd.DataFrame({
        'dominant': top['cluster'],
        'homogeneity': top['n'] / totals,
        'labelled_days': totals,
        'utilisation_rate': per_household['utilisation_rate'],
        'has_tv': per_household['has_tv'],
        'flexible_appliance_count':
            per_household['flexible_appliance_count'],
        'appliance_power_w': per_household['appliance_power_w'],
    })
    table.index.name = 'household_id'
    return table


def dominant_table(stats):
    """Household means per dominant cluster."""
    grouped = stats.groupby('dominant')
    table = pd.DataFrame({
        'households': grouped.size(),
        'homogeneity_pct': 100.0 * grouped['homogeneity'].mean(),
        'utilisation_pct': 100.0 * grouped['utilisation_rate'].mean(),
        'tv_pct': grouped['has_tv'].apply(
            lambda s: 100.0 * s.astype(float).mean()),
        'flexible_appliances': grouped['flexible_appliance_count'].mean(),
        'appliance_power_w': grouped['appliance_power_w'].mean(),
    })
    table.index.name = 'dominant'
    return table


def allocation_crosstab(days, stats):
    """
    Mean share of days spent in each cluster, per dominant cluster.

    Rows are dominant clusters, columns clusters; rows sum to 1.
    """
    labelled = _labelled(days)
    shares = pd.crosstab(labelled['household_id'], labelled['cluster'],
                         normalize='index')
    shares['dominant'] = stats['dominant'].reindex(shares.index)
    table = shares.groupby('dominant').mean()
    table.index.name = 'dominant'
    return table


def high_consumption_clusters(days, n=2):
    """The ``n`` labelled clusters with the highest mean daily energy."""
    means = _labelled(days).groupby('cluster')['daily_wh'].mean()
    means = means.drop(ECONOMIC_OUTAGE, errors='ignore')
    return list(means.sort_values(kind='mergesort').index[-n:])


def utilisation_segments(days, stats, bands=UR_BANDS, high_clusters=None):
    """
    Households per utilisation band and their mean share of days in the
    high-consumption clusters.
    """
    if high_clusters is None:
        high_clusters = high_consumption_clusters(days)
    labelled = _labelled(days)
    high_share = labelled['cluster'].isin(high_clusters).groupby(
        labelled['household_id']).mean()
    rates = stats['utilisation_rate']
    rows = []
    for i, (lower, upper) in enumerate(bands):
        last = i == len(bands) - 1
        inside = (rates >= lower) & ((rates <= upper) if last else
                                     (rates < upper))
        members = rates.index[inside]
        rows.append({
            'segment': '[{}, {}{}'.format(lower, upper, ']' if last else ')'),
            'lower': lower,
            'upper': upper,
            'households': len(members),
            'mean_utilisation': float(rates[inside].mean())
            if len(members) else np.nan,
            'high_cluster_share': float(high_share.reindex(members).mean())
            if len(members) else np.nan,
        })
    return pd.DataFrame(rows)


def _long(trends, value_name):
    parts = []
    for trend in trends:
        table = trend.table.reset_index()
        table.insert(0, 'variant', trend.variant)
        parts.append(table)
    out = pd.concat(parts, ignore_index=True, sort=False)
    if value_name is not None:
        ids = ['variant', 'age_days', 'households']
        out = out.melt(id_vars=ids, var_name='cluster',
                       value_name=value_name).dropna(subset=[value_name])
        out = out.sort_values(['variant', 'age_days', 'cluster'],
                              kind='mergesort')
    return out


def analyze(labels, frame, credit, meta, out_dir, config=None, subset=None,
            plots=False, provenance=None):
    """
    Compute every table and trend and write them to ``out_dir``.

    :param labels: label table (:func:`loadlab.assign.read_labels`)
    :param frame: profile table of the labelled days
    :param credit: credit records or credit frame
    :param meta: dict of :class:`loadlab.ingest.HouseholdMeta`
    :param config: the ``analyze`` config section
    :param subset: optional frame with ``cluster`` and ``daily_wh`` of the
                   clustered subset, enables ``table1.csv``
    :param plots: also write SVG figures
    :param provenance: block recorded under ``provenance`` in the summary
    :returns: summary dict, also written as ``summary.json``
    """
    config = config or {}
    threshold_w = config.get('appliance_threshold_w', APPLIANCE_THRESHOLD_W)
    ur_threshold = config.get('ur_threshold', UR_THRESHOLD)
    min_households = config.get('min_households', MIN_HOUSEHOLDS)
    confidence = config.get('confidence', CONFIDENCE)
    daytime = tuple(config.get('daytime_hours', DAYTIME_HOURS))
    if not os.path.isdir(out_dir):
        os.makedirs(out_dir)

    ledgers = build_ledgers(credit, meta)
    days = prepare_days(labels, frame, ledgers, meta, daytime)
    low_use = low_use_cluster(days)
    low_before = int((days['cluster'] == low_use).sum())
    days = relabel_outages(days, ledgers, low_use)

    if subset is not None:
        cluster_sizes(subset, days).to_csv(
            os.path.join(out_dir, 'table1.csv'), float_format='%.6f')
    characteristics = cluster_characteristics(days, include_total=True)
    characteristics.to_csv(os.path.join(out_dir, 'table2.csv'),
                           float_format='%.6f')
    stats = dominant_cluster_stats(days)
    dominant_table(stats).to_csv(os.path.join(out_dir, 'table3.csv'),
                                 float_format='%.6f')
    stats.to_csv(os.path.join(out_dir, 'households.csv'), float_format='%.6f')
    crosstab = allocation_crosstab(days, stats)
    crosstab.to_csv(os.path.join(out_dir, 'dominant_crosstab.csv'),
                    float_format='%.6f')

    consumption = [consumption_trend(days, split, exclude, threshold_w,
                                     confidence, min_households)
                   for split in ('all', 'high', 'low')
                   for exclude in (False, True)]
    _long(consumption, None).to_csv(
        os.path.join(out_dir, 'trend_consumption.csv'), index=False,
        float_format='%.6f')
    allocation = [cluster_allocation_trend(days, split, None, threshold_w,
                                           ur_threshold, min_households)
                  for split in ('all', 'high', 'low')]
    allocation += [cluster_allocation_trend(days, 'all', segment, threshold_w,
                                            ur_threshold, min_households)
                   for segment in ('high', 'low')]
    _long(allocation, 'proportion').to_csv(
        os.path.join(out_dir, 'trend_clusters.csv'), index=False,
        float_format='%.17g')
    segments = utilisation_segments(days, stats)
    segments.to_csv(os.path.join(out_dir, 'ur_segments.csv'), index=False,
                    float_format='%.6f')
    direction = consumption_direction(days)

    labelled = _labelled(days)
    summary = {
        'households': int(days['household_id'].nunique()),
        'labelled_days': int(len(labelled)),
        'unassigned_days': int(len(days) - len(labelled)),
        'low_use_cluster': low_use,
        'outage_share': float((labelled['cluster'] == ECONOMIC_OUTAGE).mean()),
        'low_use_share': float((labelled['cluster'] == low_use).mean()),
        'low_use_before_relabel': low_before,
        'mean_homogeneity': float(stats['homogeneity'].mean()),
        'mean_utilisation_rate': float(stats['utilisation_rate'].mean()),
        'trend': {t.variant: trend_summary(
            t, config.get('smoothing_days', 15),
            config.get('horizon_days', 730)) for t in consumption},
        'cutoff_age': {t.variant: t.cutoff_age
                       for t in consumption + allocation},
        'direction': direction.to_dict(orient='records'),
        'reduced_share': reduced_share(days),
        'high_clusters': high_consumption_clusters(days),
    }
    if provenance is not None:
        summary['provenance'] = provenance
    summary = _strict(summary)
    with open(os.path.join(out_dir, 'summary.json'), 'w') as f:
        json.dump(summary, f, indent=2, sort_keys=True, allow_nan=False)

    if plots:
        import loadlab.plots as plots_module
        plots_module.write_all(out_dir, consumption, allocation, crosstab)
    _log.info('analysed %d days of %d households into %s', len(days),
              summary['households'], out_dir)
    return summary


def _strict(value):
    """Plain JSON types with every NaN or infinity replaced by ``None``."""
    if isinstance(value, dict):
        return {k: _strict(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_strict(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if np.isfinite(value) else None
    return value
