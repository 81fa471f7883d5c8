"""Regression forests for adaptive neighbour weights and local linear fits.

Trees are CART regressors split on variance reduction. Honest trees grow on
one half-sample and are populated with the other; the weight a forest gives
to training sample ``i`` for a query ``x`` is the average over trees of
``1{i shares x's leaf} / |leaf|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import rng


@njit(cache=True)
def _best_split(X, y, idx, features, min_leaf):
    m = idx.shape[0]
    total = 0.0
    total_sq = 0.0
    for a in range(m):
        total += y[idx[a]]
        total_sq += y[idx[a]] * y[idx[a]]
    node_sse = total_sq - total * total / m
    best_f = -1
    best_thr = 0.0
    if node_sse <= 0.0:
        return best_f, best_thr
    best_gain = 1e-12 * node_sse
    base = total * total / m
    vals = np.empty(m)
    for f in features:
        for a in range(m):
            vals[a] = X[idx[a], f]
        order = np.argsort(vals, kind="mergesort")
        left = 0.0
        for pos in range(1, m - min_leaf + 1):
            left += y[idx[order[pos - 1]]]
            if pos < min_leaf:
                continue
            lo = vals[order[pos - 1]]
            hi = vals[order[pos]]
            if not lo < hi:
                continue
            right = total - left
            gain = left * left / pos + right * right / (m - pos) - base
            if gain > best_gain:
                best_gain = gain
                best_f = f
                thr = 0.5 * (lo + hi)
                if not thr < hi:
                    thr = lo
                best_thr = thr
    return best_f, best_thr


@njit(cache=True)
def _grow_forest(X, y, split_idx, keys, min_leaf, mtry):
    """Grow one tree per row of ``split_idx`` (indices into ``X``)."""
    n_trees, s = split_idx.shape
    p = X.shape[1]
    cap = 2 * s + 1
    feature = np.full((n_trees, cap), -1, dtype=np.int64)
    threshold = np.zeros((n_trees, cap))
    left = np.full((n_trees, cap), -1, dtype=np.int64)
    right = np.full((n_trees, cap), -1, dtype=np.int64)
    width = 1
    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    tmp = np.empty(s, dtype=np.int64)
    all_feats = np.arange(p)
    for t in range(n_trees):
        buf = split_idx[t].copy()
        st_node[0], st_lo[0], st_hi[0] = 0, 0, s
        sp = 1
        n_nodes = 1
        while sp > 0:
            sp -= 1
            node, lo, hi = st_node[sp], st_lo[sp], st_hi[sp]
            if hi - lo < 2 * min_leaf:
                continue
            if mtry >= p:
                feats = all_feats
            else:
                feats = np.argsort(keys[t, node])[:mtry]
            f, thr = _best_split(X, y, buf[lo:hi], feats, min_leaf)
            if f < 0:
                continue
            a, b = lo, 0
            for k in range(lo, hi):
                if X[buf[k], f] <= thr:
                    buf[a] = buf[k]
                    a += 1
                else:
                    tmp[b] = buf[k]
                    b += 1
            buf[a:hi] = tmp[:b]
            feature[t, node] = f
            threshold[t, node] = thr
            left[t, node] = n_nodes
            right[t, node] = n_nodes + 1
            st_node[sp], st_lo[sp], st_hi[sp] = n_nodes + 1, a, hi
            st_node[sp + 1], st_lo[sp + 1], st_hi[sp + 1] = n_nodes, lo, a
            sp += 2
            n_nodes += 2
        width = max(width, n_nodes)
    return feature[:, :width], threshold[:, :width], left[:, :width], right[:, :width]


@njit(cache=True)
def _apply(feature, threshold, left, right, X):
    """Leaf node id of every row of ``X`` in every tree."""
    n_trees = feature.shape[0]
    out = np.empty((n_trees, X.shape[0]), dtype=np.int64)
    for t in range(n_trees):
        for r in range(X.shape[0]):
            node = 0
            while feature[t, node] >= 0:
                if X[r, feature[t, node]] <= threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            out[t, r] = node
    return out


@njit(cache=True)
def _populate(feature, threshold, left, right, X, mult):
    leaves = _apply(feature, threshold, left, right, X)
    n_trees, n = leaves.shape
    leaf_size = np.zeros(feature.shape)
    for t in range(n_trees):
        for i in range(n):
            if mult[t, i] > 0:
                leaf_size[t, leaves[t, i]] += mult[t, i]
            else:
                leaves[t, i] = -1
    return leaves, leaf_size


@njit(cache=True)
def _weights(query_leaf, est_leaf, mult, leaf_size):
    n_trees, nq = query_leaf.shape
    n = est_leaf.shape[1]
    W = np.zeros((nq, n))
    for q in range(nq):
        used = 0
        for t in range(n_trees):
            leaf = query_leaf[t, q]
            size = leaf_size[t, leaf]
            if size == 0:
                continue
            used += 1
            for i in range(n):
                if est_leaf[t, i] == leaf:
                    W[q, i] += mult[t, i] / size
        if used > 0:
            for i in range(n):
                W[q, i] /= used
        else:
            for i in range(n):
                W[q, i] = 1.0 / n
    return W


@dataclass(frozen=True)
class ForestModel:
    """Fitted forest; training rows are kept in a canonical sorted order.

    ``order[c]`` is the caller's row index of canonical row ``c``.
    """

    features: np.ndarray
    response: np.ndarray
    order: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    est_leaf: np.ndarray
    mult: np.ndarray
    leaf_size: np.ndarray
    n_trees: int
    min_leaf: int
    mtry: int
    honest: bool

    @property
    def n_samples(self):
        return self.features.shape[0]

    def leaves(self, X):
        return _apply(self.feature, self.threshold, self.left, self.right,
                      _as_matrix(X, self.features.shape[1]))


def _as_matrix(X, p):
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, p) if p > 1 else X[:, None]
    if X.shape[1] != p:
        raise ValueError("query dimension does not match training features")
    return X


def fit_forest(features, response, n_trees=200, min_leaf=5, mtry=None,
               honest=True, seed=0, bootstrap=True) -> ForestModel:
    """Grow a regression forest.

    Parameters
    ----------
    features : array_like, shape (n, p) or (n,)
    response : array_like, shape (n,)
    n_trees, min_leaf : int
        A ``min_leaf`` above half the split sample gives single-leaf trees.
    mtry : int, optional
        Features tried per split; defaults to ``ceil(sqrt(p))``.
    honest : bool
        Split on one half-sample, populate leaves with the other.
    seed : int
        Seeds every random draw (subsamples and split-feature choice).
    bootstrap : bool
        Only used when ``honest`` is False: bootstrap rows per tree, or use
        every row for both splitting and leaf population.
    """
    y = np.asarray(response, dtype=float)
    n = y.shape[0]
    X = np.asarray(features, dtype=float)
    X = X[:, None] if X.ndim == 1 else X
    p = X.shape[1]
    if X.shape[0] != n:
        raise ValueError("features and response differ in length")
    if n < 2:
        raise ValueError("need at least two samples")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    mtry = math.ceil(math.sqrt(p)) if mtry is None else min(int(mtry), p)

    # canonical row order makes the fit independent of the caller's ordering
    order = np.lexsort(np.column_stack([X, y]).T[::-1])
    X = np.ascontiguousarray(X[order])
    y = np.ascontiguousarray(y[order])

    g = rng(seed)
    if honest:
        perm = np.argsort(g.random((n_trees, n)), axis=1)
        split_idx = perm[:, : n // 2]
        mult = np.ones((n_trees, n))
        np.put_along_axis(mult, split_idx, 0.0, axis=1)
    elif bootstrap:
        split_idx = g.integers(0, n, (n_trees, n))
        mult = np.stack([np.bincount(row, minlength=n) for row in split_idx])
        mult = mult.astype(float)
    else:
        split_idx = np.tile(np.arange(n), (n_trees, 1))
        mult = np.ones((n_trees, n))
    keys = g.random((n_trees, 2 * split_idx.shape[1] + 1, p))
    feature, threshold, left, right = _grow_forest(
        X, y, np.ascontiguousarray(split_idx), keys, min_leaf, mtry)
    width = feature.shape[1]

    est_leaf, leaf_size = _populate(feature, threshold, left, right, X, mult)

    return ForestModel(
        features=X, response=y, order=order, feature=feature,
        threshold=threshold, left=left, right=right, est_leaf=est_leaf,
        mult=mult, leaf_size=leaf_size, n_trees=n_trees, min_leaf=min_leaf,
        mtry=mtry, honest=honest)


def weight_matrix(model: ForestModel, X) -> np.ndarray:
    """Neighbour weights for many queries, shape ``(n_queries, n_samples)``.

    Columns follow the caller's original training-row order. Trees whose
    query leaf received no estimation sample are left out of the average.
    """
    leaves = model.leaves(X)
    W = _weights(leaves, model.est_leaf, model.mult, model.leaf_size)
    out = np.empty_like(W)
    out[:, model.order] = W
    return out


def query_weights(model: ForestModel, x) -> np.ndarray:
    """Weights over training samples for one query; they sum to one."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return weight_matrix(model, x)[0]


def forest_predict(model: ForestModel, X) -> np.ndarray:
    """Plain forest prediction: weighted mean of the training response."""
    W = weight_matrix(model, X)
    return W @ model.response[np.argsort(model.order)]


def llf_predict(model: ForestModel, X, ridge=0.01) -> np.ndarray:
    """Local linear forest prediction at each row of ``X``.

    Solves, per query ``x``, the weighted ridge problem
    ``min sum_i w_i(x) (y_i - a - b.(x_i - x))^2 + ridge * |b|^2`` and
    returns ``a``. A singular local system gets a ridge floor of 1e-8.
    """
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    Xq = _as_matrix(X, model.features.shape[1])
    back = np.argsort(model.order)
    Xt = model.features[back]
    y = model.response[back]
    W = weight_matrix(model, Xq)
    p = Xt.shape[1]

    D = np.concatenate(
        [np.ones((len(Xq), len(Xt), 1)), Xt[None, :, :] - Xq[:, None, :]],
        axis=2)
    DW = D * W[:, :, None]
    A = np.einsum("qni,qnj->qij", DW, D)
    b = np.einsum("qni,n->qi", DW, y)
    penalty = np.eye(p + 1)
    penalty[0, 0] = 0.0
    A_pen = A + ridge * penalty
    singular = np.linalg.matrix_rank(A_pen) < p + 1
    if np.any(singular):
        A_pen[singular] = A[singular] + max(ridge, 1e-8) * penalty
    sol = np.linalg.solve(A_pen, b[:, :, None])[:, :, 0]
    return sol[:, 0]
