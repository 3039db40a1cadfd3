"""Compiled kernels for growing and evaluating binary decision trees.

A tree is five parallel arrays indexed by node id: ``feature`` (-1 marks a
leaf), ``threshold``, ``left``, ``right`` and ``value``. Rows go left when
``x[feature] <= threshold``. Thresholds are always an observed training value
(the largest value on the left side), so a split sends the same training rows
left under any strictly increasing transform of its feature.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True)
def _splitmix_next(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _randint(state, k):
    return np.int64(_splitmix_next(state) % np.uint64(k))


@njit(cache=True)
def _trim(n_nodes, feature, threshold, left, right, value):
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True)
def grow_gini_tree(X, y, max_features, min_samples_leaf, max_depth, seed):
    """Classification tree on 0/1 labels using Gini impurity.

    At each node features are visited in a random order until
    ``max_features`` non-constant ones have been evaluated. Leaves store the
    fraction of label-1 rows. ``max_depth < 0`` means unlimited. Returns the
    node arrays and the per-feature sum of sample-weighted impurity decrease.
    """
    n, p = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    importance = np.zeros(p)

    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)
    idx = np.arange(n)
    perm = np.arange(p)
    buf = np.empty(n)

    stack_node = np.empty(cap, dtype=np.int64)
    stack_start = np.empty(cap, dtype=np.int64)
    stack_end = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    stack_depth[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        m = end - start
        pos = 0.0
        for i in range(start, end):
            pos += y[idx[i]]
        value[node] = pos / m
        if pos == 0.0 or pos == m or m < 2 * min_samples_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        p1 = pos / m
        parent_gini = 1.0 - p1 * p1 - (1.0 - p1) * (1.0 - p1)

        best_feature = -1
        best_gain = -1.0
        best_threshold = 0.0
        evaluated = 0
        for j in range(p):
            perm[j] = j
        for t in range(p):
            if evaluated >= max_features:
                break
            r = t + _randint(state, p - t)
            tmp = perm[t]
            perm[t] = perm[r]
            perm[r] = tmp
            f = perm[t]
            for i in range(m):
                buf[i] = X[idx[start + i], f]
            vals = buf[:m]
            order = np.argsort(vals, kind="mergesort")
            if vals[order[0]] == vals[order[m - 1]]:
                continue
            evaluated += 1
            left_pos = 0.0
            for i in range(m - 1):
                left_pos += y[idx[start + order[i]]]
                if vals[order[i]] == vals[order[i + 1]]:
                    continue
                nl = i + 1
                nr = m - nl
                if nl < min_samples_leaf or nr < min_samples_leaf:
                    continue
                right_pos = pos - left_pos
                ql = left_pos / nl
                qr = right_pos / nr
                gl = 1.0 - ql * ql - (1.0 - ql) * (1.0 - ql)
                gr = 1.0 - qr * qr - (1.0 - qr) * (1.0 - qr)
                gain = parent_gini - (nl * gl + nr * gr) / m
                if gain > best_gain:
                    best_gain = gain
                    best_feature = f
                    best_threshold = vals[order[i]]
        if best_feature < 0:
            continue

        importance[best_feature] += m * best_gain
        # stable in-place partition of idx[start:end]
        k = start
        tmp_idx = np.empty(m, dtype=np.int64)
        nr_count = 0
        for i in range(start, end):
            row = idx[i]
            if X[row, best_feature] <= best_threshold:
                idx[k] = row
                k += 1
            else:
                tmp_idx[nr_count] = row
                nr_count += 1
        for i in range(nr_count):
            idx[k + i] = tmp_idx[i]

        feature[node] = best_feature
        threshold[node] = best_threshold
        lchild = n_nodes
        rchild = n_nodes + 1
        n_nodes += 2
        left[node] = lchild
        right[node] = rchild
        # push right first so the left subtree is numbered first
        stack_node[top] = rchild
        stack_start[top] = k
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = lchild
        stack_start[top] = start
        stack_end[top] = k
        stack_depth[top] = depth + 1
        top += 1

    f_, t_, l_, r_, v_ = _trim(n_nodes, feature, threshold, left, right, value)
    return f_, t_, l_, r_, v_, importance


@njit(cache=True)
def presort(X):
    """Row order of each column, ascending and stable."""
    n, p = X.shape
    order = np.empty((p, n), dtype=np.int64)
    for f in range(p):
        order[f] = np.argsort(X[:, f], kind="mergesort")
    return order


@njit(cache=True)
def grow_regression_tree(X, target, order, max_depth, min_samples_leaf):
    """Least-squares regression tree over all features; leaves hold the mean target.

    Splits must reduce the squared error. ``order`` comes from
    :func:`presort`; each node scans it and keeps the rows it owns. Returns
    node arrays and per-feature total squared-error reduction.
    """
    n, p = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    gain_total = np.zeros(p)

    owner = np.zeros(n, dtype=np.int64)

    stack_node = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)
    stack_node[0] = 0
    stack_depth[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        depth = stack_depth[top]
        m = 0
        total = 0.0
        for r in range(n):
            if owner[r] == node:
                m += 1
                total += target[r]
        value[node] = total / m
        if m < 2 * min_samples_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        parent_score = total * total / m

        best_feature = -1
        best_gain = 0.0
        best_threshold = 0.0
        for f in range(p):
            nl = 0
            left_sum = 0.0
            prev = 0.0
            for q in range(n):
                r = order[f, q]
                if owner[r] != node:
                    continue
                v = X[r, f]
                if nl > 0 and v != prev:
                    nr = m - nl
                    if nl >= min_samples_leaf and nr >= min_samples_leaf:
                        right_sum = total - left_sum
                        gain = left_sum * left_sum / nl + right_sum * right_sum / nr - parent_score
                        if gain > best_gain * (1.0 + 1e-12) + 1e-15:
                            best_gain = gain
                            best_feature = f
                            best_threshold = prev
                left_sum += target[r]
                nl += 1
                prev = v
        if best_feature < 0:
            continue

        gain_total[best_feature] += best_gain
        lchild = n_nodes
        rchild = n_nodes + 1
        n_nodes += 2
        for r in range(n):
            if owner[r] == node:
                owner[r] = lchild if X[r, best_feature] <= best_threshold else rchild
        feature[node] = best_feature
        threshold[node] = best_threshold
        left[node] = lchild
        right[node] = rchild
        stack_node[top] = rchild
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = lchild
        stack_depth[top] = depth + 1
        top += 1

    f_, t_, l_, r_, v_ = _trim(n_nodes, feature, threshold, left, right, value)
    return f_, t_, l_, r_, v_, gain_total


@njit(cache=True)
def predict_packed(X, offsets, feature, threshold, left, right, value):
    """Per-row sum of leaf values over every tree in a packed ensemble.

    Tree ``t`` occupies node slots ``offsets[t]:offsets[t + 1]``; child ids
    are local to the tree.
    """
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.zeros(n)
    for r in range(n):
        acc = 0.0
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feature[base + node] >= 0:
                if X[r, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            acc += value[base + node]
        out[r] = acc
    return out
