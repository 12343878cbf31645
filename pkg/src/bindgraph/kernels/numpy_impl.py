"""Pure-numpy kernel implementations.

These are the reference paths; the numba module mirrors them loop-for-loop.
All neighbor lists are sorted by ascending distance with ascending-index
tie-breaks (stable sort over a naturally index-ordered axis).
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

_CHUNK = 512


def knn_graph(coords: np.ndarray, k: int):
    """k nearest neighbors per row, self excluded.

    Returns (idx, dist, mask); rows with fewer than k candidates are padded
    with sentinel index n and +inf distance, mask False.
    """
    n = coords.shape[0]
    d = cdist(coords, coords)
    np.fill_diagonal(d, np.inf)
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    dist = np.take_along_axis(d, order, axis=1)
    mask = np.isfinite(dist)
    idx = np.where(mask, order, n)
    if k > n - 1:
        pad = k - (n - 1)
        idx = np.pad(idx, ((0, 0), (0, pad)), constant_values=n)
        dist = np.pad(dist, ((0, 0), (0, pad)), constant_values=np.inf)
        mask = np.pad(mask, ((0, 0), (0, pad)), constant_values=False)
    return idx.astype(np.int64), dist, mask


def radius_graph(centroids: np.ndarray, points: np.ndarray,
                 radius: float, k_max: int):
    """Points within `radius` of each centroid, truncated to k_max nearest."""
    n, m = centroids.shape[0], points.shape[0]
    idx = np.full((n, k_max), m, dtype=np.int64)
    dist = np.full((n, k_max), np.inf)
    if m:
        d = cdist(centroids, points)
        d[d > radius] = np.inf
        order = np.argsort(d, axis=1, kind="stable")[:, :k_max]
        got = np.take_along_axis(d, order, axis=1)
        take = min(k_max, m)
        fin = np.isfinite(got)
        idx[:, :take] = np.where(fin, order, m)[:, :take]
        dist[:, :take] = got[:, :take]
    mask = np.isfinite(dist)
    return idx, dist, mask


def residue_min_dist(coords: np.ndarray, res_index: np.ndarray,
                     n_res: int) -> np.ndarray:
    """Minimum atom-atom distance for every residue pair (+inf if empty)."""
    out = np.full((n_res, n_res), np.inf)
    m = coords.shape[0]
    for start in range(0, m, _CHUNK):
        stop = min(start + _CHUNK, m)
        d = cdist(coords[start:stop], coords)
        rows = res_index[start:stop]
        np.minimum.at(out, (rows[:, None], res_index[None, :]), d)
    return out


def nw_align(a: np.ndarray, b: np.ndarray, match: float, mismatch: float,
             gap: float) -> np.ndarray:
    """Global alignment; returns matched index pairs (P, 2).

    Traceback prefers diagonal, then up (gap in b), then left (gap in a).
    """
    n, m = len(a), len(b)
    score = np.zeros((n + 1, m + 1))
    ptr = np.zeros((n + 1, m + 1), dtype=np.uint8)  # 1=diag 2=up 3=left
    score[1:, 0] = gap * np.arange(1, n + 1)
    score[0, 1:] = gap * np.arange(1, m + 1)
    ptr[1:, 0] = 2
    ptr[0, 1:] = 3
    sub = np.where(a[:, None] == b[None, :], match, mismatch)
    for i in range(1, n + 1):
        diag = score[i - 1, :-1] + sub[i - 1]
        row = score[i]
        prev = score[i - 1]
        for j in range(1, m + 1):
            d = diag[j - 1]
            u = prev[j] + gap
            l = row[j - 1] + gap
            if d >= u and d >= l:
                row[j] = d
                ptr[i, j] = 1
            elif u >= l:
                row[j] = u
                ptr[i, j] = 2
            else:
                row[j] = l
                ptr[i, j] = 3
    pairs = []
    i, j = n, m
    while i > 0 or j > 0:
        p = ptr[i, j]
        if p == 1:
            pairs.append((i - 1, j - 1))
            i -= 1
            j -= 1
        elif p == 2:
            i -= 1
        else:
            j -= 1
    pairs.reverse()
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
