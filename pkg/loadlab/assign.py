"""
Label every daily profile with its nearest medoid.
"""

import concurrent.futures
import io
import json
import logging
import os

import numba

import numpy as np

import pandas as pd

import loadlab.dtw as dtw
import loadlab.exceptions as exceptions
import loadlab.profiles as profiles
import loadlab.utils as utils

_log = logging.getLogger(__name__)

UNASSIGNED = 'unassigned'
LABEL_COLUMNS = ['household_id', 'date', 'age_days', 'cluster', 'distance']
DEFAULT_BATCH_SIZE = 50000
CHECKPOINT_SUFFIX = '.checkpoint'
PART_SUFFIX = '.part'

_dtw = dtw._dtw


@numba.njit(nogil=True, cache=True)
def _nearest(series, medoids, start, stop, labels, distances):
    for i in range(start, stop):
        best = np.inf
        pick = -1
        for m in range(medoids.shape[0]):
            d = _dtw(series[i], medoids[m])
            if d < best:
                best = d
                pick = m
        labels[i] = pick
        distances[i] = best


def nearest_medoid(series, medoids, threads=None):
    """
    Index of and distance to the nearest medoid for each row of ``series``.

    Ties go to the lowest medoid index.
    """
    series = np.ascontiguousarray(series, dtype=np.float64)
    medoids = np.ascontiguousarray(medoids, dtype=np.float64)
    n = series.shape[0]
    labels = np.empty(n, dtype=np.int64)
    distances = np.empty(n)
    if n == 0:
        return labels, distances
    threads = utils.resolve_threads(threads)
    with concurrent.futures.ThreadPoolExecutor(threads) as pool:
        futures = [pool.submit(_nearest, series, medoids, start, stop, labels,
                               distances)
                   for start, stop in utils.chunk_bounds(n, threads * 4)]
        for future in futures:
            future.result()
    return labels, distances


def _medoid_matrix(medoids):
    medoids = np.asarray(medoids, dtype=np.float64)
    if medoids.ndim != 2 or len(medoids) == 0 or medoids.shape[1] != 24:
        raise ValueError('medoids must be a non-empty (k, 24) array')
    if np.isnan(medoids).any():
        raise exceptions.IncompleteProfileError('medoid with missing hours')
    return medoids


def label_full_dataset(frame, medoids, names=None, threads=None):
    """
    Nearest-medoid DTW labels for a profile table.

    Incomplete profiles are labelled ``unassigned`` with no distance.

    :param frame: profile table
    :param medoids: ``(k, 24)`` medoid hourly energies
    :param names: cluster names, ``cluster_<index>`` by default
    :returns: table with columns ``household_id, date, age_days, cluster,
              distance``
    """
    medoids = _medoid_matrix(medoids)
    if names is None:
        names = ['cluster_{}'.format(c) for c in range(len(medoids))]
    if len(names) != len(medoids):
        raise ValueError('need one name per medoid')

    complete = frame['complete'].to_numpy(bool)
    hours = profiles.hours_matrix(frame)
    complete &= ~np.isnan(hours).any(axis=1)
    index, distances = nearest_medoid(hours[complete], medoids, threads)

    cluster = np.full(len(frame), UNASSIGNED, dtype=object)
    cluster[complete] = np.asarray(names, dtype=object)[index]
    distance = np.full(len(frame), np.nan)
    distance[complete] = distances

    out = pd.DataFrame({
        'household_id': frame['household_id'].to_numpy(),
        'date': frame['date'].to_numpy(),
        'age_days': frame['age_days'].to_numpy(),
        'cluster': cluster,
        'distance': distance,
    }, columns=LABEL_COLUMNS)
    excluded = int((~complete).sum())
    if excluded:
        _log.warning('%d incomplete profiles left unassigned', excluded)
    return out


def write_labels(labels, path_or_buf, header=True):
    out = labels.copy()
    out['date'] = pd.to_datetime(out['date']).dt.strftime(
        profiles.DATE_FORMAT)
    out.to_csv(path_or_buf, index=False, header=header,
               float_format='%.6f', na_rep='')


def read_labels(path):
    labels = pd.read_csv(path, dtype={'household_id': str, 'cluster': str})
    labels['date'] = pd.to_datetime(labels['date'],
                                    format=profiles.DATE_FORMAT)
    labels['age_days'] = labels['age_days'].astype(np.int64)
    return labels


def _fingerprint(profiles_path, model):
    return {
        'profiles_sha256': utils.file_sha256(profiles_path),
        'medoid_hours': model.medoid_hours,
        'names': model.names,
    }


def _load_checkpoint(path, fingerprint):
    if not os.path.exists(path):
        return None
    with open(path) as f:
        state = json.load(f)
    if state.get('fingerprint') != fingerprint:
        _log.warning('%s does not match the current inputs, starting over',
                     path)
        return None
    return state


def _save_checkpoint(path, state):
    tmp = path + '.tmp'
    with open(tmp, 'w') as f:
        json.dump(state, f)
    os.replace(tmp, path)


def assign_to_csv(profiles_path, model, out, batch_size=DEFAULT_BATCH_SIZE,
                  threads=None):
    """
    Stream a profile CSV through :func:`label_full_dataset` in batches.

    Progress is checkpointed to ``<out>.checkpoint`` after every batch; a
    restart with the same inputs resumes after the last finished batch.

    :param model: :class:`loadlab.cluster.ClusterModel` with medoid profiles
    :returns: number of labelled rows
    """
    if model.medoid_hours is None:
        raise exceptions.DataError('cluster model carries no medoid profiles')
    medoids = _medoid_matrix(model.medoid_hours)
    checkpoint = out + CHECKPOINT_SUFFIX
    part = out + PART_SUFFIX
    fingerprint = _fingerprint(profiles_path, model)
    state = _load_checkpoint(checkpoint, fingerprint)
    if state is None or not os.path.exists(part):
        state = {'fingerprint': fingerprint, 'batches': 0, 'rows': 0,
                 'offset': 0}
    else:
        _log.info('resuming %s after %d batches (%d rows)', out,
                  state['batches'], state['rows'])

    with open(part, 'ab') as f:
        f.truncate(state['offset'])
    batches = profiles.read_profiles(profiles_path, chunksize=batch_size)
    for number, batch in enumerate(batches):
        if number < state['batches']:
            continue
        labels = label_full_dataset(batch, medoids, model.names, threads)
        buf = io.StringIO()
        write_labels(labels, buf, header=state['offset'] == 0)
        with open(part, 'ab') as f:
            f.write(buf.getvalue().encode('utf-8'))
            offset = f.tell()
        state.update(batches=number + 1, rows=state['rows'] + len(labels),
                     offset=offset)
        _save_checkpoint(checkpoint, state)
        _log.debug('batch %d: %d rows', number, len(labels))

    if state['offset'] == 0:
        with open(part, 'w', newline='') as f:
            f.write(','.join(LABEL_COLUMNS) + '\n')
    os.replace(part, out)
    if os.path.exists(checkpoint):
        os.remove(checkpoint)
    _log.info('labelled %d profiles into %s', state['rows'], out)
    return state['rows']


def household_sequence(labels, household_id):
    """
    Chronological cluster labels of one household.

    Position ``i`` holds the label of age ``first_age + i``; days without a
    profile are ``None``.
    """
    rows = labels[labels['household_id'] == household_id]
    if rows.empty:
        raise exceptions.UnknownHouseholdError([household_id])
    rows = rows.sort_values('age_days', kind='mergesort')
    ages = rows['age_days'].to_numpy(np.int64)
    first = int(ages[0])
    sequence = [None] * (int(ages[-1]) - first + 1)
    for age, cluster in zip(ages, rows['cluster']):
        sequence[int(age) - first] = cluster
    return sequence
