"""
Dynamic time warping between daily load profiles.

Local cost is the squared difference of hourly energies and the accumulated
cost is returned as is, so distances are in Wh squared. No warping window
is applied.
"""

import concurrent.futures
import logging
import os

import numba

import numpy as np

import pandas as pd

import loadlab.exceptions as exceptions
import loadlab.profiles as profiles
import loadlab.utils as utils

_log = logging.getLogger(__name__)

MAGIC = b'LLDM'
FORMAT_VERSION = 1
_HEADER_SIZE = len(MAGIC) + 2 + 8
KEYS_SUFFIX = '.keys.csv'


@numba.njit(nogil=True, cache=True)
def _dtw(x, y):
    n = x.shape[0]
    m = y.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    prev[0] = (x[0] - y[0]) ** 2
    for j in range(1, m):
        prev[j] = prev[j - 1] + (x[0] - y[j]) ** 2
    for i in range(1, n):
        cur[0] = prev[0] + (x[i] - y[0]) ** 2
        for j in range(1, m):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = (x[i] - y[j]) ** 2 + best
        prev, cur = cur, prev
    return prev[m - 1]


@numba.njit(nogil=True, cache=True)
def _dtw_full(x, y):
    n = x.shape[0]
    m = y.shape[0]
    c = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            cost = (x[i] - y[j]) ** 2
            if i == 0 and j == 0:
                c[i, j] = cost
            elif i == 0:
                c[i, j] = cost + c[i, j - 1]
            elif j == 0:
                c[i, j] = cost + c[i - 1, j]
            else:
                c[i, j] = cost + min(c[i - 1, j - 1], c[i - 1, j],
                                     c[i, j - 1])
    return c


@numba.njit(nogil=True, cache=True)
def _fill_rows(series, start, stop, out):
    p = series.shape[0]
    for i in range(start, stop):
        for j in range(i + 1, p):
            out[i, j] = _dtw(series[i], series[j])


def _as_series(x, name):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError('{} must be one-dimensional'.format(name))
    if len(x) == 0:
        raise ValueError('{} must not be empty'.format(name))
    return x


def dtw_distance(x, y):
    """
    DTW distance between two sequences.

    :param x: sequence of length n >= 1
    :param y: sequence of length m >= 1
    :returns: accumulated squared cost of the cheapest monotone alignment
    """
    return float(_dtw(_as_series(x, 'x'), _as_series(y, 'y')))


def dtw_cost_matrix(x, y):
    """
    The full ``(n, m)`` accumulated cost matrix.

    Its last entry equals :func:`dtw_distance`; use it to inspect
    alignments, not for bulk work.
    """
    return _dtw_full(_as_series(x, 'x'), _as_series(y, 'y'))


def _series_matrix(source):
    if isinstance(source, pd.DataFrame):
        if not source['complete'].all():
            raise exceptions.IncompleteProfileError(
                '{} profiles are incomplete'.format(
                    int((~source['complete']).sum())))
        return profiles.hours_matrix(source), profiles.profile_keys(source)
    return np.ascontiguousarray(source, dtype=np.float64), None


def distance_matrix(source, threads=None):
    """
    Pairwise DTW distances.

    Every pair ``i < j`` is evaluated once and mirrored. Rows are split
    into blocks handed to a thread pool; the kernel releases the GIL.

    :param source: profile table or ``(p, 24)`` array
    :param threads: worker threads, see :func:`loadlab.utils.resolve_threads`
    :returns: :class:`DistanceMatrix`
    """
    series, keys = _series_matrix(source)
    if series.ndim != 2 or series.shape[0] < 2:
        raise ValueError('need at least 2 profiles')
    if series.shape[1] != 24:
        raise ValueError('profiles must have exactly 24 hours')
    if np.isnan(series).any():
        raise exceptions.IncompleteProfileError(
            'profiles with missing hours cannot be compared')

    p = series.shape[0]
    threads = utils.resolve_threads(threads)
    out = np.zeros((p, p))
    # rows near the top carry more pairs, so cut finer than one per thread
    blocks = utils.chunk_bounds(p, threads * 8)
    with concurrent.futures.ThreadPoolExecutor(threads) as pool:
        futures = [pool.submit(_fill_rows, series, start, stop, out)
                   for start, stop in blocks]
        for future in futures:
            future.result()
    out += out.T
    _log.info('computed %d pairwise distances for %d profiles on %d threads',
              p * (p - 1) // 2, p, threads)
    return DistanceMatrix(out, keys)


class DistanceMatrix(object):
    """
    Symmetric DTW distance matrix.

    :ivar values: ``(p, p)`` float64 array
    :ivar keys: ``household_id,date`` table of the p profiles, or None
    """

    def __init__(self, values, keys=None):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError('distance matrix must be square')
        self.values = values
        if keys is not None:
            keys = pd.DataFrame(keys).reset_index(drop=True)
            if len(keys) != len(values):
                raise ValueError('need one key per row')
        self.keys = keys

    def __len__(self):
        return self.values.shape[0]

    @property
    def size(self):
        return len(self)

    def key_labels(self):
        """``household_id/date`` strings, or row numbers without keys."""
        if self.keys is None:
            return [str(i) for i in range(len(self))]
        return (self.keys['household_id'].astype(str) + '/' +
                self.keys['date'].astype(str)).tolist()

    def save(self, path):
        """
        Write the strictly lower triangle as a binary file.

        Layout, little endian: magic ``LLDM``, uint16 version, uint64 p,
        then p(p-1)/2 float64 in row-major order. Keys go to
        ``<path>.keys.csv``.
        """
        p = len(self)
        rows, cols = np.tril_indices(p, -1)
        with open(path, 'wb') as f:
            f.write(MAGIC)
            f.write(np.array([FORMAT_VERSION], dtype='<u2').tobytes())
            f.write(np.array([p], dtype='<u8').tobytes())
            f.write(self.values[rows, cols].astype('<f8').tobytes())
        if self.keys is not None:
            self.keys.to_csv(path + KEYS_SUFFIX, index=False)

    @classmethod
    def load(cls, path):
        with open(path, 'rb') as f:
            blob = f.read()
        if len(blob) < _HEADER_SIZE or blob[:4] != MAGIC:
            raise exceptions.DataError(
                '{}: not a distance matrix file'.format(path))
        version = int(np.frombuffer(blob, dtype='<u2', count=1, offset=4)[0])
        if version != FORMAT_VERSION:
            raise exceptions.DataError(
                '{}: unsupported format version {}'.format(path, version))
        p = int(np.frombuffer(blob, dtype='<u8', count=1, offset=6)[0])
        n = p * (p - 1) // 2
        if len(blob) != _HEADER_SIZE + 8 * n:
            raise exceptions.DataError(
                '{}: expected {} entries for p={}'.format(path, n, p))
        tri = np.frombuffer(blob, dtype='<f8', count=n, offset=_HEADER_SIZE)
        values = np.zeros((p, p))
        rows, cols = np.tril_indices(p, -1)
        values[rows, cols] = tri
        values[cols, rows] = tri
        keys = None
        if os.path.exists(path + KEYS_SUFFIX):
            keys = pd.read_csv(path + KEYS_SUFFIX, dtype=str)
        return cls(values, keys)

    def to_csv(self, path):
        """Write the full matrix with profile keys as row and column labels."""
        labels = self.key_labels()
        pd.DataFrame(self.values, index=labels, columns=labels).to_csv(
            path, float_format='%.6f')
