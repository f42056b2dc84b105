import hashlib
import json
import os

import numpy as np

_THREADS_ENV = 'LOADLAB_THREADS'

SECONDS_PER_HOUR = 3600
SECONDS_PER_DAY = 86400


def resolve_threads(threads=None):
    """
    Work out how many worker threads to use.

    An explicit value wins, then the ``LOADLAB_THREADS`` environment
    variable, then the number of CPUs.
    """
    if threads is None:
        env = os.environ.get(_THREADS_ENV)
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise ValueError('{} must be an integer, got "{}"'.format(
                    _THREADS_ENV, env))
    if threads is None:
        threads = os.cpu_count() or 1
    if threads < 1:
        raise ValueError('thread count must be >= 1')
    return threads


def chunk_bounds(n, n_chunks):
    """Split ``range(n)`` into at most ``n_chunks`` (start, stop) runs."""
    n_chunks = max(1, min(n_chunks, n))
    edges = np.linspace(0, n, n_chunks + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def file_sha256(path, block_size=1 << 20):
    """Hash a file's contents."""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(block_size), b''):
            digest.update(block)
    return digest.hexdigest()


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(',', ':'))


def child_seed(seed, *keys):
    """Derive a numpy Generator that depends only on ``seed`` and ``keys``."""
    entropy = [int(seed)] + [int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def largest_remainder(weights, total):
    """
    Allocate ``total`` integer units proportionally to ``weights``.

    Floors every share, then hands the leftover units to the largest
    fractional remainders (lower index first on ties). The result always
    sums to ``total``.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if total < 0:
        raise ValueError('total must be >= 0')
    if weights.sum() <= 0:
        raise ValueError('weights must have a positive sum')
    exact = weights / weights.sum() * total
    alloc = np.floor(exact).astype(np.int64)
    leftover = int(total - alloc.sum())
    if leftover > 0:
        remainders = exact - alloc
        # stable sort keeps lower index first among equal remainders
        order = np.argsort(-remainders, kind='stable')
        alloc[order[:leftover]] += 1
    return alloc


def randomised_rounding(weights, total, rng):
    """
    Allocate ``total`` integer units so that each share's expectation is
    exactly its proportional value.

    Every share gets its floor; the leftover units go to shares picked by
    systematic sampling over the fractional remainders, so share ``i`` gets
    an extra unit with probability equal to its remainder.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if total < 0:
        raise ValueError('total must be >= 0')
    if weights.sum() <= 0:
        raise ValueError('weights must have a positive sum')
    exact = weights / weights.sum() * total
    alloc = np.floor(exact).astype(np.int64)
    leftover = int(total - alloc.sum())
    if leftover > 0:
        edges = np.minimum(
            np.concatenate(([0.0], np.cumsum(exact - alloc))), leftover)
        edges[-1] = leftover
        # a share gains a unit when some integer + u lands in its interval
        alloc += np.diff(np.floor(edges - rng.random())).astype(np.int64)
    return alloc
