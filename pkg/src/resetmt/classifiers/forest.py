"""Bagged Gini trees; scores are the fraction of trees voting positive.

Trees are grown to purity (minimum node size 1) on bootstrap samples, with
``mtry`` features drawn without replacement at every split. A node none of
whose drawn features separates its samples becomes a leaf. Trees are grown
on order-only coordinates (a value's position among the training values),
so scores are invariant to strictly increasing transforms of any feature.
"""
from __future__ import annotations

import math

import numba
import numpy as np


@numba.njit(cache=True)
def _best_split(X, y, idx, feats):
    n = idx.size
    pos_total = 0
    for i in range(n):
        pos_total += y[idx[i]]
    best_score = -1.0
    best_f = -1
    best_thr = 0.0
    vals = np.empty(n)
    labs = np.empty(n, dtype=np.int64)
    for f in feats:
        for i in range(n):
            vals[i] = X[idx[i], f]
        order = np.argsort(vals, kind="mergesort")
        for i in range(n):
            labs[i] = y[idx[order[i]]]
        left_pos = 0
        for i in range(n - 1):
            left_pos += labs[i]
            a = vals[order[i]]
            b = vals[order[i + 1]]
            if a == b:
                continue
            nl = i + 1
            nr = n - nl
            right_pos = pos_total - left_pos
            # larger is better: sum over children of (pos^2 + neg^2) / size
            score = (left_pos**2 + (nl - left_pos) ** 2) / nl + (right_pos**2 + (nr - right_pos) ** 2) / nr
            if score > best_score:
                best_score = score
                best_f = f
                best_thr = 0.5 * (a + b)
    parent = (pos_total**2 + (n - pos_total) ** 2) / n
    if best_f >= 0 and best_score <= parent + 1e-12:
        best_f = -1
    return best_f, best_thr


@numba.njit(cache=True)
def _grow_forest(X, y, n_trees, mtry, seed):
    np.random.seed(seed)
    n, d = X.shape
    cap = 2 * n + 1
    feature = np.full((n_trees, cap), -1, dtype=np.int64)
    threshold = np.zeros((n_trees, cap))
    left = np.zeros((n_trees, cap), dtype=np.int64)
    right = np.zeros((n_trees, cap), dtype=np.int64)
    vote = np.zeros((n_trees, cap), dtype=np.int8)
    all_feats = np.arange(d)
    for t in range(n_trees):
        boot = np.random.randint(0, n, n)
        # node stack: (node id, start, stop) into a permutation buffer
        buf = boot.copy()
        stack_node = np.empty(cap, dtype=np.int64)
        stack_lo = np.empty(cap, dtype=np.int64)
        stack_hi = np.empty(cap, dtype=np.int64)
        top = 0
        stack_node[0], stack_lo[0], stack_hi[0] = 0, 0, n
        top = 1
        n_nodes = 1
        while top > 0:
            top -= 1
            node, lo, hi = stack_node[top], stack_lo[top], stack_hi[top]
            idx = buf[lo:hi]
            pos = 0
            for i in range(idx.size):
                pos += y[idx[i]]
            size = hi - lo
            if pos == 0 or pos == size or size < 2:
                f = -1
            else:
                np.random.shuffle(all_feats)
                f, thr = _best_split(X, y, idx, all_feats[:mtry].copy())
            if f < 0:
                if 2 * pos > size:
                    vote[t, node] = 1
                elif 2 * pos == size:
                    vote[t, node] = 1 if np.random.random() < 0.5 else 0
                continue
            # partition idx in place
            part = np.empty(size, dtype=np.int64)
            a = 0
            b = size - 1
            for i in range(size):
                if X[idx[i], f] <= thr:
                    part[a] = idx[i]
                    a += 1
                else:
                    part[b] = idx[i]
                    b -= 1
            buf[lo:hi] = part
            feature[t, node] = f
            threshold[t, node] = thr
            left[t, node] = n_nodes
            right[t, node] = n_nodes + 1
            stack_node[top], stack_lo[top], stack_hi[top] = n_nodes, lo, lo + a
            top += 1
            stack_node[top], stack_lo[top], stack_hi[top] = n_nodes + 1, lo + a, hi
            top += 1
            n_nodes += 2
    return feature, threshold, left, right, vote


@numba.njit(cache=True)
def _vote_fraction(X, feature, threshold, left, right, vote):
    n = X.shape[0]
    n_trees = feature.shape[0]
    out = np.zeros(n)
    for i in range(n):
        for t in range(n_trees):
            node = 0
            while feature[t, node] >= 0:
                if X[i, feature[t, node]] <= threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            out[i] += vote[t, node]
    return out / n_trees


class VotingForest:
    def __init__(self, n_trees=500, mtry=None):
        self.n_trees = n_trees
        self.mtry = mtry

    def _positions(self, X):
        # 2k+1 for the k-th distinct training value, 2k strictly between the
        # (k-1)-th and k-th; midpoints between positions then split gaps
        out = np.empty(X.shape, dtype=np.float64)
        for j, u in enumerate(self.values_):
            out[:, j] = np.searchsorted(u, X[:, j], "left") + np.searchsorted(u, X[:, j], "right")
        return out

    def fit(self, X, y, rng: np.random.Generator):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y01 = (np.asarray(y) == 1).astype(np.int64)
        d = X.shape[1]
        mtry = min(self.mtry or math.ceil(math.sqrt(d)), d)
        seed = int(rng.integers(2**31 - 1))
        self.values_ = [np.unique(X[:, j]) for j in range(d)]
        self.trees_ = _grow_forest(self._positions(X), y01, self.n_trees, mtry, seed)
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return _vote_fraction(self._positions(X), *self.trees_)
