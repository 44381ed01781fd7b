"""Numba kernels for the hot per-node tree operations.

All kernels take the full feature matrix plus a row-index array so node
partitions never copy feature data. ``X`` must be C-contiguous float64 and
``y`` an int64 0/1 vector.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def node_stats(X, y, idx):
    """Per-feature min/max over the node rows, plus the positive-label count."""
    n = idx.shape[0]
    d = X.shape[1]
    mins = np.empty(d, dtype=np.float64)
    maxs = np.empty(d, dtype=np.float64)
    for j in range(d):
        v = X[idx[0], j]
        mins[j] = v
        maxs[j] = v
    n_pos = 0
    for i in range(n):
        r = idx[i]
        n_pos += y[r]
        for j in range(d):
            v = X[r, j]
            if v < mins[j]:
                mins[j] = v
            elif v > maxs[j]:
                maxs[j] = v
    return mins, maxs, n_pos


@njit(cache=True, nogil=True)
def _entropy2(a, b):
    n = a + b
    if a == 0 or b == 0:
        return 0.0
    pa = a / n
    pb = b / n
    return -(pa * np.log(pa) + pb * np.log(pb))


@njit(cache=True, nogil=True)
def best_candidate(X, y, idx, feats, cuts, n_pos):
    """Information gain of each (feature, cut) candidate; returns the winner.

    Ties break toward the lower feature index, then the smaller cut-point.
    Every cut is strictly inside the node's (min, max) for its feature, so
    both sides are always non-empty.
    """
    n = idx.shape[0]
    total = float(n)
    base = _entropy2(float(n_pos), float(n - n_pos))
    best_slot = 0
    best_gain = -1.0
    best_feat = -1
    best_cut = 0.0
    for k in range(feats.shape[0]):
        f = feats[k]
        c = cuts[k]
        n_left = 0
        pos_left = 0
        for i in range(n):
            r = idx[i]
            if X[r, f] < c:
                n_left += 1
                pos_left += y[r]
        n_right = n - n_left
        pos_right = n_pos - pos_left
        gain = (
            base
            - (n_left / total) * _entropy2(float(pos_left), float(n_left - pos_left))
            - (n_right / total) * _entropy2(float(pos_right), float(n_right - pos_right))
        )
        better = gain > best_gain
        if gain == best_gain:
            if f < best_feat or (f == best_feat and c < best_cut):
                better = True
        if better:
            best_slot = k
            best_gain = gain
            best_feat = f
            best_cut = c
    return best_slot, best_gain


@njit(cache=True, nogil=True)
def partition(X, idx, feat, cut):
    """Stable split of node rows into (x < cut) and the rest."""
    n = idx.shape[0]
    n_left = 0
    for i in range(n):
        if X[idx[i], feat] < cut:
            n_left += 1
    left = np.empty(n_left, dtype=np.int64)
    right = np.empty(n - n_left, dtype=np.int64)
    a = 0
    b = 0
    for i in range(n):
        r = idx[i]
        if X[r, feat] < cut:
            left[a] = r
            a += 1
        else:
            right[b] = r
            b += 1
    return left, right


@njit(cache=True, nogil=True)
def tree_predict_add(feature, threshold, left, right, p1, X, out):
    """Route every row of X to its leaf and add the leaf class-1 frequency."""
    n = X.shape[0]
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += p1[node]
