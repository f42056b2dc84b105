"""
Telemetry, credit and metadata ingestion.

Raw telemetry arrives as irregular, change-triggered samples of output
voltage and current. :func:`integrate_hourly` turns one household's samples
into hourly energies with a zero-order hold and :func:`slice_daily` cuts the
hourly series into local calendar days.
"""

import collections
import concurrent.futures
import datetime
import logging

import numpy as np

import pandas as pd

import loadlab.exceptions as exceptions
import loadlab.profiles as profiles
import loadlab.utils as utils

_log = logging.getLogger(__name__)

TELEMETRY_COLUMNS = ['household_id', 'timestamp_utc', 'voltage_v',
                     'current_a']
CREDIT_COLUMNS = ['household_id', 'date', 'days_remaining']
META_COLUMNS = ['household_id', 'country_code', 'utc_offset_minutes',
                'activation_date', 'appliance_power_w', 'has_tv',
                'flexible_appliance_count']

BACKSTOP_SECONDS = 600
MIN_OFFSET_MINUTES = -720
MAX_OFFSET_MINUTES = 840

_TRUE = {'true', '1', 'yes', 't', 'y'}
_FALSE = {'false', '0', 'no', 'f', 'n'}


RawSample = collections.namedtuple(
    'RawSample', ['household_id', 'timestamp', 'voltage_v', 'current_a'])
RawSample.__doc__ = """
One telemetry record.

``timestamp`` is UTC as read from the CSV and local time once
:func:`parse_telemetry` has applied the household's offset.
"""

CreditRecord = collections.namedtuple(
    'CreditRecord', ['household_id', 'local_date', 'days_remaining'])

HouseholdMeta = collections.namedtuple(
    'HouseholdMeta',
    ['household_id', 'country_code', 'utc_offset_minutes', 'activation_date',
     'appliance_power_w', 'has_tv', 'flexible_appliance_count'])


class SampleBlock(object):
    """
    The samples of one household as aligned arrays.

    :ivar household_id: household key
    :ivar seconds: int64 epoch seconds (local time after parsing)
    :ivar voltage_v: float64 volts
    :ivar current_a: float64 amperes
    """

    def __init__(self, household_id, seconds, voltage_v, current_a):
        self.household_id = household_id
        self.seconds = np.asarray(seconds, dtype=np.int64)
        self.voltage_v = np.asarray(voltage_v, dtype=np.float64)
        self.current_a = np.asarray(current_a, dtype=np.float64)
        if not (len(self.seconds) == len(self.voltage_v)
                == len(self.current_a)):
            raise ValueError('sample arrays must have the same length')

    def __len__(self):
        return len(self.seconds)

    def __iter__(self):
        stamps = self.timestamps
        for t, v, i in zip(stamps, self.voltage_v, self.current_a):
            yield RawSample(self.household_id, t, float(v), float(i))

    @property
    def timestamps(self):
        return pd.to_datetime(self.seconds, unit='s')

    @property
    def power_w(self):
        return self.voltage_v * self.current_a


class HourlyEnergySeries(object):
    """
    Hourly energy for one household.

    :ivar household_id: household key
    :ivar start_hour: local time of the first hour (``pandas.Timestamp``)
    :ivar values: Wh per hour, NaN where the hour has no telemetry at all
    :ivar coverage: fraction of each hour covered by held telemetry; an hour
                    with coverage below 1 is gap-marked
    :ivar activation_date: local date of the first sample
    :ivar long_gaps: number of sample intervals longer than the backstop
    """

    def __init__(self, household_id, start_hour, values, coverage,
                 activation_date, long_gaps=0):
        self.household_id = household_id
        self.start_hour = start_hour
        self.values = np.asarray(values, dtype=np.float64)
        self.coverage = np.asarray(coverage, dtype=np.float64)
        self.activation_date = activation_date
        self.long_gaps = long_gaps

    def __len__(self):
        return len(self.values)

    @property
    def gap_mask(self):
        return self.coverage < 1.0 - 1e-12

    @property
    def hours(self):
        if self.start_hour is None:
            return pd.DatetimeIndex([])
        return pd.date_range(self.start_hour, periods=len(self), freq='H')


def instantaneous_power(sample):
    """Return the power of a sample in watts, ``V * I``."""
    return sample.voltage_v * sample.current_a


def _read_table(path, columns):
    frame = pd.read_csv(path, dtype=str, keep_default_na=False,
                        skipinitialspace=True)
    header = [c.strip() for c in frame.columns]
    if header != columns:
        raise exceptions.MalformedRowError(
            1, 'expected header "{}", got "{}"'.format(','.join(columns),
                                                      ','.join(header)),
            path=path)
    frame.columns = columns
    # header is line 1
    frame.index = frame.index + 2
    return frame


def _check_rows(frame, problems, path, strict):
    """
    Drop invalid rows.

    :param problems: sequence of (boolean mask, reason); the first failing
                     check names the row's error
    :returns: the valid rows and a list of :class:`MalformedRowError`
    """
    reasons = pd.Series(None, index=frame.index, dtype=object)
    for mask, reason in problems:
        mask = pd.Series(mask, index=frame.index).fillna(True)
        reasons = reasons.where(reasons.notna() | ~mask, reason)
    bad = reasons.dropna()
    errors = [exceptions.MalformedRowError(int(line), reason, path=path)
              for line, reason in bad.items()]
    if errors and strict:
        raise errors[0]
    if errors:
        _log.warning('%s: skipped %d malformed rows', path, len(errors))
    return frame.loc[reasons.isna()], errors


def _parse_bool(column):
    lowered = column.str.strip().str.lower()
    parsed = pd.Series(np.nan, index=column.index, dtype=object)
    parsed[lowered.isin(_TRUE)] = True
    parsed[lowered.isin(_FALSE)] = False
    return parsed


def parse_meta(path, strict=True):
    """
    Parse the household metadata CSV.

    :returns: dict of household id to :class:`HouseholdMeta`
    """
    frame = _read_table(path, META_COLUMNS)
    offset = pd.to_numeric(frame['utc_offset_minutes'], errors='coerce')
    activation = pd.to_datetime(frame['activation_date'],
                                format=profiles.DATE_FORMAT, errors='coerce')
    power = pd.to_numeric(frame['appliance_power_w'], errors='coerce')
    has_tv = _parse_bool(frame['has_tv'])
    flexible = pd.to_numeric(frame['flexible_appliance_count'],
                             errors='coerce')
    frame, errors = _check_rows(frame, [
        (frame['household_id'].str.strip() == '', 'empty household_id'),
        (offset.isna() | (offset != offset.round()),
         'invalid utc_offset_minutes'),
        ((offset < MIN_OFFSET_MINUTES) | (offset > MAX_OFFSET_MINUTES),
         'utc_offset_minutes out of range'),
        (activation.isna(), 'invalid activation_date'),
        (power.isna(), 'invalid appliance_power_w'),
        (power < 0, 'negative appliance_power_w'),
        (has_tv.isna(), 'invalid has_tv'),
        (flexible.isna() | (flexible != flexible.round()) | (flexible < 0),
         'invalid flexible_appliance_count'),
    ], path, strict)

    meta = {}
    for line, row in frame.iterrows():
        household_id = row['household_id'].strip()
        meta[household_id] = HouseholdMeta(
            household_id,
            row['country_code'].strip(),
            int(offset[line]),
            activation[line].date(),
            float(power[line]),
            bool(has_tv[line]),
            int(flexible[line]))
    return meta


def parse_telemetry(path, meta, strict=True):
    """
    Parse a telemetry CSV into per-household sample blocks.

    Timestamps are shifted to local time with the household's
    ``utc_offset_minutes``, samples are sorted by time and samples sharing a
    timestamp collapse to the last one in file order.

    :param meta: dict of household id to :class:`HouseholdMeta`
    :param strict: raise on the first malformed row; otherwise skip
                   malformed rows and report them
    :returns: dict of household id to :class:`SampleBlock`, and the list of
              row errors
    :raises UnknownHouseholdError: when ids are missing from ``meta``
    """
    frame = _read_table(path, TELEMETRY_COLUMNS)
    frame['household_id'] = frame['household_id'].str.strip()
    stamps = pd.to_datetime(frame['timestamp_utc'].str.strip(), utc=True,
                            format='ISO8601', errors='coerce')
    voltage = pd.to_numeric(frame['voltage_v'], errors='coerce')
    current = pd.to_numeric(frame['current_a'], errors='coerce')
    frame, errors = _check_rows(frame, [
        (frame['household_id'] == '', 'empty household_id'),
        (stamps.isna(), 'invalid timestamp'),
        (voltage.isna(), 'invalid voltage'),
        (voltage < 0, 'negative voltage'),
        (current.isna(), 'invalid current'),
        (current < 0, 'negative current'),
    ], path, strict)

    unknown = set(frame['household_id'].unique()) - set(meta)
    if unknown:
        raise exceptions.UnknownHouseholdError(unknown)

    offsets = frame['household_id'].map(
        {k: m.utc_offset_minutes for k, m in meta.items()})
    utc_seconds = (stamps[frame.index].dt.tz_convert(None)
                   .astype('int64') // 10 ** 9)
    table = pd.DataFrame({
        'household_id': frame['household_id'].to_numpy(),
        'seconds': (utc_seconds + offsets * 60).to_numpy(np.int64),
        'voltage_v': voltage[frame.index].to_numpy(np.float64),
        'current_a': current[frame.index].to_numpy(np.float64),
    })
    table['row'] = np.arange(len(table))
    table = table.sort_values(['household_id', 'seconds', 'row'])
    table = table.drop_duplicates(['household_id', 'seconds'], keep='last')

    blocks = {}
    for household_id, group in table.groupby('household_id', sort=True):
        blocks[household_id] = SampleBlock(
            household_id, group['seconds'].to_numpy(),
            group['voltage_v'].to_numpy(), group['current_a'].to_numpy())
    _log.info('%s: %d samples for %d households', path, len(table),
              len(blocks))
    return blocks, errors


def _as_block(samples):
    if isinstance(samples, SampleBlock):
        return samples
    samples = list(samples)
    if not samples:
        return SampleBlock(None, [], [], [])
    household_ids = {s.household_id for s in samples}
    if len(household_ids) > 1:
        raise ValueError('samples span several households: {}'.format(
            ', '.join(sorted(str(h) for h in household_ids))))
    stamps = pd.DatetimeIndex([pd.Timestamp(s.timestamp) for s in samples])
    if stamps.tz is not None:
        stamps = stamps.tz_convert(None)
    seconds = stamps.asi8 // 10 ** 9
    return SampleBlock(samples[0].household_id, seconds,
                       [s.voltage_v for s in samples],
                       [s.current_a for s in samples])


def integrate_hourly(samples, max_hold_s=None, backstop_s=BACKSTOP_SECONDS):
    """
    Integrate zero-order-held power over hourly intervals.

    Each sample's power ``V * I`` is held until the next sample (or, with
    ``max_hold_s``, for at most that many seconds, leaving the rest of the
    interval uncovered). Segments are split exactly at hour boundaries.
    After the last sample the power is held up to the end of the hour it
    falls in.

    :param samples: a :class:`SampleBlock` or time-ordered
                    :class:`RawSample` records of one household
    :param max_hold_s: longest hold in seconds, ``None`` for unbounded
    :param backstop_s: intervals longer than this are counted as long gaps
    :returns: :class:`HourlyEnergySeries`
    :raises OutOfOrderError: when timestamps decrease
    """
    block = _as_block(samples)
    if len(block) == 0:
        return HourlyEnergySeries(block.household_id, None, [], [], None)

    t = block.seconds
    if np.any(np.diff(t) < 0):
        raise exceptions.OutOfOrderError(
            'samples for {} are not sorted by time'.format(
                block.household_id))
    power = block.power_w
    hour = utils.SECONDS_PER_HOUR

    start = (t[0] // hour) * hour
    end = -(-t[-1] // hour) * hour
    n_hours = int((end - start) // hour)

    interval = np.diff(np.append(t, end))
    held = interval if max_hold_s is None else np.minimum(interval,
                                                          max_hold_s)
    long_gaps = int(np.count_nonzero(interval[:-1] > backstop_s))
    if long_gaps:
        _log.warning('%s: %d sample intervals exceed the %d s backstop',
                     block.household_id, long_gaps, backstop_s)

    energy_before = np.concatenate(([0.0], np.cumsum(power * held)))
    covered_before = np.concatenate(([0], np.cumsum(held)))

    bounds = start + hour * np.arange(n_hours + 1, dtype=np.int64)
    idx = np.searchsorted(t, bounds, side='right') - 1
    inside = idx >= 0
    safe = np.where(inside, idx, 0)
    into = np.minimum(bounds - t[safe], held[safe])
    energy_at = np.where(inside,
                         energy_before[safe] + power[safe] * into, 0.0)
    covered_at = np.where(inside, covered_before[safe] + into, 0)

    values = np.diff(energy_at) / hour
    coverage = np.diff(covered_at) / float(hour)
    values[coverage <= 0] = np.nan

    start_hour = pd.Timestamp(int(start), unit='s')
    activation = pd.Timestamp(int(t[0]), unit='s').date()
    return HourlyEnergySeries(block.household_id, start_hour, values,
                              coverage, activation, long_gaps=long_gaps)


def slice_daily(series, activation_date=None):
    """
    Cut an hourly series into local calendar days.

    :param activation_date: day 0 for ``age_days``; defaults to the
                            series' first sample date. Days before it are
                            dropped.
    :returns: list of :class:`DailyProfile` in date order
    """
    if len(series) == 0:
        return []
    if activation_date is None:
        activation_date = series.activation_date

    first_day = series.start_hour.normalize()
    lead = int((series.start_hour - first_day) / pd.Timedelta(hours=1))
    total = lead + len(series)
    n_days = -(-total // 24)
    tail = n_days * 24 - total

    values = np.concatenate((np.full(lead, np.nan), series.values,
                             np.full(tail, np.nan))).reshape(n_days, 24)
    coverage = np.concatenate((np.zeros(lead), series.coverage,
                               np.zeros(tail))).reshape(n_days, 24)
    complete = np.all(coverage >= 1.0 - 1e-12, axis=1)

    result = []
    dropped = 0
    day0 = first_day.date()
    for d in range(n_days):
        date = day0 + datetime.timedelta(days=d)
        age = (date - activation_date).days
        if age < 0:
            dropped += 1
            continue
        result.append(profiles.DailyProfile(
            series.household_id, date, age, values[d], bool(complete[d])))
    if dropped:
        _log.warning('%s: dropped %d days before activation %s',
                     series.household_id, dropped, activation_date)
    return result


def parse_credit(path, strict=True):
    """
    Parse the credit CSV and fill missing days.

    Days without a record between a household's first and last record get
    the previous balance minus one day per elapsed day, floored at zero.

    :returns: list of :class:`CreditRecord` sorted by household and date,
              and the list of row errors
    """
    frame = _read_table(path, CREDIT_COLUMNS)
    frame['household_id'] = frame['household_id'].str.strip()
    dates = pd.to_datetime(frame['date'].str.strip(),
                           format=profiles.DATE_FORMAT, errors='coerce')
    days = pd.to_numeric(frame['days_remaining'], errors='coerce')
    frame, errors = _check_rows(frame, [
        (frame['household_id'] == '', 'empty household_id'),
        (dates.isna(), 'invalid date'),
        (days.isna(), 'invalid days_remaining'),
        (days < 0, 'negative days_remaining'),
    ], path, strict)

    table = pd.DataFrame({
        'household_id': frame['household_id'].to_numpy(),
        'date': dates[frame.index].to_numpy(),
        'days_remaining': days[frame.index].to_numpy(np.float64),
    })
    table['row'] = np.arange(len(table))
    table = table.sort_values(['household_id', 'date', 'row'])
    table = table.drop_duplicates(['household_id', 'date'], keep='last')

    records = []
    for household_id, group in table.groupby('household_id', sort=True):
        known = group.set_index('date')['days_remaining']
        full = pd.date_range(known.index[0], known.index[-1], freq='D')
        last_value = known.reindex(full).ffill()
        last_date = pd.Series(known.index, index=known.index).reindex(
            full).ffill()
        elapsed = np.asarray((full - pd.DatetimeIndex(last_date)).days,
                             dtype=np.float64)
        filled = np.maximum(last_value.to_numpy() - elapsed, 0.0)
        records.extend(
            CreditRecord(household_id, d.date(), float(v))
            for d, v in zip(full, filled))
    return records, errors


def credit_frame(records):
    """Turn credit records into a ``household_id, date, days_remaining``
    table with ``datetime64`` dates."""
    frame = pd.DataFrame(list(records), columns=list(CreditRecord._fields))
    frame['date'] = pd.to_datetime(frame['local_date'])
    return frame.drop(columns='local_date')


def _household_profiles(block, meta, max_hold_s):
    series = integrate_hourly(block, max_hold_s=max_hold_s)
    activation = meta.activation_date if meta is not None else None
    return slice_daily(series, activation_date=activation), series.long_gaps


def ingest_fleet(blocks, meta, threads=None, max_hold_s=None):
    """
    Turn every household's samples into daily profiles.

    Households are processed in a thread pool; the output order is by
    household then date and does not depend on the thread count.

    :param blocks: dict of household id to :class:`SampleBlock`
    :param meta: dict of household id to :class:`HouseholdMeta`
    :returns: profile table
    """
    threads = utils.resolve_threads(threads)
    household_ids = sorted(blocks)
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(
            lambda h: _household_profiles(blocks[h], meta.get(h),
                                          max_hold_s),
            household_ids))

    days = [p for household_days, _ in results for p in household_days]
    long_gaps = sum(gaps for _, gaps in results)
    frame = profiles.to_frame(days)
    _log.info('built %d daily profiles (%d complete) for %d households, '
              '%d long gaps', len(frame), int(frame['complete'].sum()),
              len(household_ids), long_gaps)
    return frame


def drop_young_households(frame, min_ownership_days):
    """Drop households observed for fewer than ``min_ownership_days``."""
    if min_ownership_days <= 0 or frame.empty:
        return frame
    owned = frame.groupby('household_id')['age_days'].transform('max') + 1
    kept = frame[owned >= min_ownership_days]
    _log.info('dropped %d households younger than %d days',
              frame['household_id'].nunique() - kept['household_id']
              .nunique(), min_ownership_days)
    return kept.reset_index(drop=True)
