"""Numba-jitted kernels; same contracts as numpy_impl."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _knn_graph(coords, k):
    n = coords.shape[0]
    idx = np.full((n, k), n, dtype=np.int64)
    dist = np.full((n, k), np.inf)
    mask = np.zeros((n, k), dtype=np.bool_)
    d_row = np.empty(n)
    for i in range(n):
        for j in range(n):
            dx = coords[i, 0] - coords[j, 0]
            dy = coords[i, 1] - coords[j, 1]
            dz = coords[i, 2] - coords[j, 2]
            d_row[j] = np.sqrt(dx * dx + dy * dy + dz * dz)
        d_row[i] = np.inf
        order = np.argsort(d_row, kind="mergesort")
        take = k if k < n else n
        for t in range(take):
            j = order[t]
            if not np.isfinite(d_row[j]):
                break
            idx[i, t] = j
            dist[i, t] = d_row[j]
            mask[i, t] = True
    return idx, dist, mask


@njit(cache=True)
def _radius_graph(centroids, points, radius, k_max):
    n = centroids.shape[0]
    m = points.shape[0]
    idx = np.full((n, k_max), m, dtype=np.int64)
    dist = np.full((n, k_max), np.inf)
    mask = np.zeros((n, k_max), dtype=np.bool_)
    d_row = np.empty(m)
    for i in range(n):
        for j in range(m):
            dx = centroids[i, 0] - points[j, 0]
            dy = centroids[i, 1] - points[j, 1]
            dz = centroids[i, 2] - points[j, 2]
            d = np.sqrt(dx * dx + dy * dy + dz * dz)
            d_row[j] = d if d <= radius else np.inf
        order = np.argsort(d_row, kind="mergesort")
        take = k_max if k_max < m else m
        for t in range(take):
            j = order[t]
            if not np.isfinite(d_row[j]):
                break
            idx[i, t] = j
            dist[i, t] = d_row[j]
            mask[i, t] = True
    return idx, dist, mask


@njit(cache=True)
def _residue_min_dist(coords, res_index, n_res):
    out = np.full((n_res, n_res), np.inf)
    m = coords.shape[0]
    for a in range(m):
        ra = res_index[a]
        for b in range(m):
            rb = res_index[b]
            dx = coords[a, 0] - coords[b, 0]
            dy = coords[a, 1] - coords[b, 1]
            dz = coords[a, 2] - coords[b, 2]
            d = np.sqrt(dx * dx + dy * dy + dz * dz)
            if d < out[ra, rb]:
                out[ra, rb] = d
    return out


@njit(cache=True)
def _nw_align(a, b, match, mismatch, gap):
    n, m = len(a), len(b)
    score = np.zeros((n + 1, m + 1))
    ptr = np.zeros((n + 1, m + 1), dtype=np.uint8)
    for i in range(1, n + 1):
        score[i, 0] = gap * i
        ptr[i, 0] = 2
    for j in range(1, m + 1):
        score[0, j] = gap * j
        ptr[0, j] = 3
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            s = match if a[i - 1] == b[j - 1] else mismatch
            d = score[i - 1, j - 1] + s
            u = score[i - 1, j] + gap
            l = score[i, j - 1] + gap
            if d >= u and d >= l:
                score[i, j] = d
                ptr[i, j] = 1
            elif u >= l:
                score[i, j] = u
                ptr[i, j] = 2
            else:
                score[i, j] = l
                ptr[i, j] = 3
    buf = np.empty((n + m, 2), dtype=np.int64)
    count = 0
    i, j = n, m
    while i > 0 or j > 0:
        p = ptr[i, j]
        if p == 1:
            buf[count, 0] = i - 1
            buf[count, 1] = j - 1
            count += 1
            i -= 1
            j -= 1
        elif p == 2:
            i -= 1
        else:
            j -= 1
    out = np.empty((count, 2), dtype=np.int64)
    for t in range(count):
        out[t, 0] = buf[count - 1 - t, 0]
        out[t, 1] = buf[count - 1 - t, 1]
    return out


def knn_graph(coords, k):
    return _knn_graph(np.ascontiguousarray(coords, dtype=np.float64), int(k))


def radius_graph(centroids, points, radius, k_max):
    return _radius_graph(np.ascontiguousarray(centroids, dtype=np.float64),
                         np.ascontiguousarray(points, dtype=np.float64),
                         float(radius), int(k_max))


def residue_min_dist(coords, res_index, n_res):
    return _residue_min_dist(np.ascontiguousarray(coords, dtype=np.float64),
                             np.ascontiguousarray(res_index, dtype=np.int64),
                             int(n_res))


def nw_align(a, b, match, mismatch, gap):
    return _nw_align(np.ascontiguousarray(a, dtype=np.int64),
                     np.ascontiguousarray(b, dtype=np.int64),
                     float(match), float(mismatch), float(gap))
