"""
Daily profile records and the profile table codec.

A set of daily profiles travels between stages as a :class:`pandas.DataFrame`
with the columns in :data:`PROFILE_COLUMNS`; ``date`` is a ``datetime64``
local calendar day and ``h00`` ... ``h23`` hold Wh per hour (NaN for an hour
without any telemetry).
"""

import collections

import numpy as np

import pandas as pd

HOUR_COLUMNS = ['h{:02d}'.format(h) for h in range(24)]
KEY_COLUMNS = ['household_id', 'date']
PROFILE_COLUMNS = KEY_COLUMNS + ['age_days', 'complete'] + HOUR_COLUMNS

DATE_FORMAT = '%Y-%m-%d'


DailyProfile = collections.namedtuple(
    'DailyProfile',
    ['household_id', 'local_date', 'age_days', 'hours', 'complete'])
DailyProfile.__doc__ = """
One household-day of hourly energy.

:ivar household_id: household key
:ivar local_date: local calendar day (``datetime.date``)
:ivar age_days: days since activation, activation day is 0
:ivar hours: 24 Wh values
:ivar complete: True when every hour is fully covered by telemetry
"""


def to_frame(profiles):
    """Build a profile table from an iterable of :class:`DailyProfile`."""
    profiles = list(profiles)
    if not profiles:
        return empty_frame()
    hours = np.vstack([np.asarray(p.hours, dtype=np.float64)
                       for p in profiles])
    frame = pd.DataFrame(hours, columns=HOUR_COLUMNS)
    frame.insert(0, 'household_id', [str(p.household_id) for p in profiles])
    frame.insert(1, 'date', pd.to_datetime([p.local_date for p in profiles]))
    frame.insert(2, 'age_days',
                 np.array([p.age_days for p in profiles], dtype=np.int64))
    frame.insert(3, 'complete',
                 np.array([p.complete for p in profiles], dtype=bool))
    return frame


def empty_frame():
    frame = pd.DataFrame({c: pd.Series(dtype=np.float64)
                          for c in PROFILE_COLUMNS})
    frame['household_id'] = frame['household_id'].astype(object)
    frame['date'] = pd.to_datetime(frame['date'])
    frame['age_days'] = frame['age_days'].astype(np.int64)
    frame['complete'] = frame['complete'].astype(bool)
    return frame


def iter_profiles(frame):
    """Yield :class:`DailyProfile` records from a profile table."""
    hours = hours_matrix(frame)
    for row, values in zip(frame.itertuples(index=False), hours):
        yield DailyProfile(row.household_id, row.date.date(),
                           int(row.age_days), values, bool(row.complete))


def hours_matrix(frame):
    """Return the ``(n, 24)`` float64 matrix of hourly energies."""
    return np.ascontiguousarray(frame[HOUR_COLUMNS].to_numpy(np.float64))


def daily_totals(frame):
    return frame[HOUR_COLUMNS].sum(axis=1, min_count=24).to_numpy(
        np.float64)


def profile_keys(frame):
    """Return ``household_id,date`` string keys for every row."""
    return pd.DataFrame({
        'household_id': frame['household_id'].astype(str).to_numpy(),
        'date': frame['date'].dt.strftime(DATE_FORMAT).to_numpy(),
    })


def sort_frame(frame):
    return frame.sort_values(KEY_COLUMNS, kind='mergesort').reset_index(
        drop=True)


def write_profiles(frame, path):
    """Write a profile table as CSV with 6 decimal places."""
    out = frame[PROFILE_COLUMNS].copy()
    out['date'] = out['date'].dt.strftime(DATE_FORMAT)
    out['complete'] = out['complete'].map({True: 'true', False: 'false'})
    out.to_csv(path, index=False, float_format='%.6f', na_rep='')


def read_profiles(path, chunksize=None):
    """
    Read a profile CSV written by :func:`write_profiles`.

    :param chunksize: when given, return an iterator of tables of at most
                      this many rows instead of a single table
    """
    reader = pd.read_csv(path, dtype={'household_id': str},
                         chunksize=chunksize)
    if chunksize is None:
        return _normalise(reader)
    return (_normalise(chunk) for chunk in reader)


def _normalise(frame):
    missing = [c for c in PROFILE_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError('profile table missing columns: {}'.format(
            ', '.join(missing)))
    frame['date'] = pd.to_datetime(frame['date'], format=DATE_FORMAT)
    frame['age_days'] = frame['age_days'].astype(np.int64)
    complete = frame['complete']
    if complete.dtype != bool:
        complete = complete.astype(str).str.lower().map(
            {'true': True, 'false': False, '1': True, '0': False})
    frame['complete'] = complete.astype(bool)
    frame[HOUR_COLUMNS] = frame[HOUR_COLUMNS].astype(np.float64)
    return frame
