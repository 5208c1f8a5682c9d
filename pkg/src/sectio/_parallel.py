"""Chunked evaluation with a worker pool whose size never changes the result.

Work is always split into the same fixed-size chunks, results are stored by
chunk index, and any reduction happens afterwards on the concatenated array.
"""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 32768


def worker_count():
    raw = os.environ.get("SECTIO_THREADS", "")
    try:
        k = int(raw)
    except ValueError:
        k = os.cpu_count() or 1
    return max(1, k)


def chunk_slices(total, chunk=CHUNK):
    return [slice(s, min(s + chunk, total)) for s in range(0, total, chunk)]


def map_chunks(func, total, chunk=CHUNK):
    """Call ``func(slice)`` for every chunk of ``range(total)``, results in order."""
    slices = chunk_slices(total, chunk)
    workers = min(worker_count(), len(slices))
    if workers <= 1:
        return [func(s) for s in slices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, slices))


def evaluate_rows(func, X, chunk=CHUNK):
    """Row-chunked evaluation of a vectorized function on an (m, n) array."""
    X = np.asarray(X, dtype=float)
    if len(X) == 0:
        return np.zeros(0)
    parts = map_chunks(lambda s: np.asarray(func(X[s]), dtype=float), len(X), chunk)
    return np.concatenate(parts)


def tree_sum(values):
    """Fixed pairwise-tree sum along the first axis."""
    v = np.asarray(values, dtype=float)
    if v.shape[0] == 0:
        return np.zeros(v.shape[1:])
    while v.shape[0] > 1:
        if v.shape[0] % 2:
            v = np.concatenate([v, np.zeros((1,) + v.shape[1:])])
        v = v[0::2] + v[1::2]
    return v[0]
