"""Compiled CART kernels.

Nodes are grown depth-first from an explicit stack. Each candidate feature is
scanned either by bucketing samples into the column's global value codes
(when the column has fewer distinct values than the node has samples) or by
sorting the node's values; both scans visit thresholds in ascending order so
the first best split wins ties.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _splitmix(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True, nogil=True)
def _midpoint(a, b):
    m = 0.5 * (a + b)
    if m >= b:
        m = a
    return m


@njit(cache=True, nogil=True)
def build_tree(X, codes, uniq, uniq_offsets, y, w, n_classes, max_depth, min_leaf,
               max_features, seed):
    n, d = X.shape
    idx = np.empty(n, dtype=np.int64)
    m = 0
    for i in range(n):
        if w[i] > 0:
            idx[m] = i
            m += 1
    idx = idx[:m]

    cap = 64
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    counts = np.zeros((cap, n_classes))
    n_nodes = 1

    stack = np.zeros((64, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = m
    stack[0, 2] = 0
    stack[0, 3] = 0
    sp = 1

    perm = np.arange(d)
    state = np.uint64(seed)
    node_counts = np.zeros(n_classes)
    left_counts = np.zeros(n_classes)
    max_uniq = 0
    for f in range(d):
        u = uniq_offsets[f + 1] - uniq_offsets[f]
        if u > max_uniq:
            max_uniq = u
    bucket = np.zeros((max_uniq, n_classes))
    vals = np.empty(m)
    chosen = np.empty(d, dtype=np.int64)

    while sp > 0:
        sp -= 1
        start = stack[sp, 0]
        end = stack[sp, 1]
        depth = stack[sp, 2]
        node = stack[sp, 3]

        node_counts[:] = 0.0
        for j in range(start, end):
            i = idx[j]
            node_counts[y[i]] += w[i]
        total = node_counts.sum()
        counts[node, :] = node_counts

        n_nonzero = 0
        for c in range(n_classes):
            if node_counts[c] > 0:
                n_nonzero += 1
        if depth >= max_depth or n_nonzero <= 1 or total < 2 * min_leaf:
            continue

        parent = 0.0
        for c in range(n_classes):
            parent += node_counts[c] * node_counts[c]
        parent /= total

        if max_features >= d:
            k = d
            for f in range(d):
                chosen[f] = f
        else:
            k = max_features
            for f in range(d):
                perm[f] = f
            for f in range(k):
                state, r = _splitmix(state)
                j = f + np.int64(r % np.uint64(d - f))
                tmp = perm[f]
                perm[f] = perm[j]
                perm[j] = tmp
            for f in range(k):
                chosen[f] = perm[f]
            chosen[:k].sort()

        best_gain = 1e-12 * total
        best_f = -1
        best_t = 0.0
        size = end - start
        for ci in range(k):
            f = chosen[ci]
            off = uniq_offsets[f]
            nu = uniq_offsets[f + 1] - off
            if nu < 2:
                continue
            left_counts[:] = 0.0
            if nu <= size:
                bucket[:nu, :] = 0.0
                for j in range(start, end):
                    i = idx[j]
                    bucket[codes[i, f], y[i]] += w[i]
                prev = -1
                for u in range(nu):
                    row_total = 0.0
                    for c in range(n_classes):
                        row_total += bucket[u, c]
                    if row_total == 0.0:
                        continue
                    if prev >= 0:
                        wl = left_counts.sum()
                        wr = total - wl
                        if wl >= min_leaf and wr >= min_leaf:
                            score = 0.0
                            for c in range(n_classes):
                                rc = node_counts[c] - left_counts[c]
                                score += left_counts[c] * left_counts[c] / wl + rc * rc / wr
                            gain = score - parent
                            if gain > best_gain:
                                best_gain = gain
                                best_f = f
                                best_t = _midpoint(uniq[off + prev], uniq[off + u])
                    for c in range(n_classes):
                        left_counts[c] += bucket[u, c]
                    prev = u
            else:
                for j in range(start, end):
                    vals[j - start] = X[idx[j], f]
                order = np.argsort(vals[:size], kind="mergesort")
                j = 0
                while j < size:
                    v = vals[order[j]]
                    if j > 0:
                        wl = left_counts.sum()
                        wr = total - wl
                        if wl >= min_leaf and wr >= min_leaf:
                            score = 0.0
                            for c in range(n_classes):
                                rc = node_counts[c] - left_counts[c]
                                score += left_counts[c] * left_counts[c] / wl + rc * rc / wr
                            gain = score - parent
                            if gain > best_gain:
                                best_gain = gain
                                best_f = f
                                best_t = _midpoint(vals[order[j - 1]], v)
                    while j < size and vals[order[j]] == v:
                        i = idx[start + order[j]]
                        left_counts[y[i]] += w[i]
                        j += 1

        if best_f < 0:
            continue

        # partition idx[start:end] in place: <= threshold first
        lo = start
        hi = end - 1
        while lo <= hi:
            if X[idx[lo], best_f] <= best_t:
                lo += 1
            else:
                tmp = idx[lo]
                idx[lo] = idx[hi]
                idx[hi] = tmp
                hi -= 1

        if n_nodes + 2 > cap:
            cap *= 2
            feature = np.concatenate((feature, np.full(cap - feature.shape[0], -1, dtype=np.int64)))
            threshold = np.concatenate((threshold, np.zeros(cap - threshold.shape[0])))
            left = np.concatenate((left, np.full(cap - left.shape[0], -1, dtype=np.int64)))
            right = np.concatenate((right, np.full(cap - right.shape[0], -1, dtype=np.int64)))
            grown = np.zeros((cap, n_classes))
            grown[: counts.shape[0], :] = counts
            counts = grown

        feature[node] = best_f
        threshold[node] = best_t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        if sp + 2 > stack.shape[0]:
            bigger = np.zeros((stack.shape[0] * 2, 4), dtype=np.int64)
            bigger[:sp, :] = stack[:sp, :]
            stack = bigger
        # push right first so the left subtree is grown first
        stack[sp, 0] = lo
        stack[sp, 1] = end
        stack[sp, 2] = depth + 1
        stack[sp, 3] = n_nodes + 1
        sp += 1
        stack[sp, 0] = start
        stack[sp, 1] = lo
        stack[sp, 2] = depth + 1
        stack[sp, 3] = n_nodes
        sp += 1
        n_nodes += 2

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), counts[:n_nodes].copy())


@njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
