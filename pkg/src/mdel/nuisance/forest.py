"""Regression random forest (CART trees on bootstrap samples)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .models import NuisanceModelSpec

__all__ = ["ForestFit", "fit_random_forest"]

_SMALL_NODE = 64


@njit(cache=True)
def _best_split(x, y, idx, start, end, feats, nf):
    best_score = -np.inf
    best_feat = -1
    best_thr = 0.0
    m = end - start
    vals = np.empty(m)
    ys = np.empty(m)
    tmp = np.empty(m)
    for t in range(nf):
        f = feats[t]
        if m <= _SMALL_NODE:
            # insertion sort of (value, response) pairs; stable, no allocation
            for i in range(m):
                v = x[idx[start + i], f]
                w = y[idx[start + i]]
                j = i - 1
                while j >= 0 and vals[j] > v:
                    vals[j + 1] = vals[j]
                    ys[j + 1] = ys[j]
                    j -= 1
                vals[j + 1] = v
                ys[j + 1] = w
        else:
            for i in range(m):
                tmp[i] = x[idx[start + i], f]
            order = np.argsort(tmp, kind="mergesort")
            for i in range(m):
                vals[i] = tmp[order[i]]
                ys[i] = y[idx[start + order[i]]]
        total = 0.0
        for i in range(m):
            total += ys[i]
        left = 0.0
        for i in range(m - 1):
            left += ys[i]
            v0 = vals[i]
            v1 = vals[i + 1]
            if v1 <= v0:
                continue
            nl = i + 1
            nr = m - nl
            right = total - left
            score = left * left / nl + right * right / nr
            if score > best_score:
                best_score = score
                best_feat = f
                best_thr = 0.5 * (v0 + v1)
                # midpoint can round onto v1 when the gap is one ulp
                if best_thr >= v1:
                    best_thr = v0
    return best_feat, best_thr


@njit(cache=True)
def _grow_tree(x, y, mtry, min_node, bootstrap, seed):
    np.random.seed(seed)
    n, p = x.shape
    idx = np.empty(n, dtype=np.int64)
    if bootstrap:
        for i in range(n):
            idx[i] = np.random.randint(0, n)
    else:
        for i in range(n):
            idx[i] = i
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    # stack entries: node id, start, end
    stack = np.empty((cap, 3), dtype=np.int64)
    sp = 0
    stack[sp, 0] = 0
    stack[sp, 1] = 0
    stack[sp, 2] = n
    sp += 1
    n_nodes = 1
    perm = np.arange(p)
    feats = np.empty(mtry, dtype=np.int64)
    while sp > 0:
        sp -= 1
        node = stack[sp, 0]
        start = stack[sp, 1]
        end = stack[sp, 2]
        m = end - start
        s = 0.0
        ymin = np.inf
        ymax = -np.inf
        for i in range(start, end):
            v = y[idx[i]]
            s += v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        value[node] = s / m
        if m <= min_node or ymax == ymin:
            continue
        # partial Fisher-Yates: first mtry entries of perm are the candidates
        for t in range(mtry):
            u = t + np.random.randint(0, p - t)
            tmp = perm[t]
            perm[t] = perm[u]
            perm[u] = tmp
            feats[t] = perm[t]
        f, thr = _best_split(x, y, idx, start, end, feats, mtry)
        if f < 0:
            continue
        lo = start
        hi = end - 1
        while lo <= hi:
            if x[idx[lo], f] <= thr:
                lo += 1
            else:
                tmp = idx[lo]
                idx[lo] = idx[hi]
                idx[hi] = tmp
                hi -= 1
        mid = lo
        if mid == start or mid == end:
            continue
        feature[node] = f
        threshold[node] = thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack[sp, 0] = n_nodes
        stack[sp, 1] = start
        stack[sp, 2] = mid
        sp += 1
        stack[sp, 0] = n_nodes + 1
        stack[sp, 1] = mid
        stack[sp, 2] = end
        sp += 1
        n_nodes += 2
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def _grow_forest(x, y, mtry, min_node, bootstrap, seeds):
    n_trees = seeds.shape[0]
    offsets = np.zeros(n_trees + 1, dtype=np.int64)
    cap = n_trees * (2 * x.shape[0] + 1)
    feature = np.empty(cap, dtype=np.int64)
    threshold = np.empty(cap)
    left = np.empty(cap, dtype=np.int64)
    right = np.empty(cap, dtype=np.int64)
    value = np.empty(cap)
    pos = 0
    for t in range(n_trees):
        f, th, l, r, v = _grow_tree(x, y, mtry, min_node, bootstrap, seeds[t])
        k = f.shape[0]
        feature[pos:pos + k] = f
        threshold[pos:pos + k] = th
        left[pos:pos + k] = l
        right[pos:pos + k] = r
        value[pos:pos + k] = v
        pos += k
        offsets[t + 1] = pos
    return feature[:pos], threshold[:pos], left[:pos], right[:pos], value[:pos], offsets


@njit(cache=True)
def _predict_forest(xq, feature, threshold, left, right, value, offsets):
    nq = xq.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.zeros(nq)
    for i in range(nq):
        acc = 0.0
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feature[base + node] >= 0:
                if xq[i, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            acc += value[base + node]
        out[i] = acc / n_trees
    return out


@dataclass(frozen=True)
class ForestFit:
    """Flattened tree arrays; tree ``t`` occupies ``offsets[t]:offsets[t+1]``.

    Node ids inside a tree are local, so ``left``/``right`` index relative to
    the tree's offset. ``feature == -1`` marks a leaf.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    offsets: np.ndarray
    n_trees: int
    mtry: int
    min_node_size: int
    tree_seeds: np.ndarray
    p: int

    @property
    def trees(self) -> list[dict]:
        out = []
        for t in range(self.n_trees):
            sl = slice(self.offsets[t], self.offsets[t + 1])
            out.append(dict(feature=self.feature[sl], threshold=self.threshold[sl],
                            left=self.left[sl], right=self.right[sl], value=self.value[sl]))
        return out

    def predict(self, x_query) -> np.ndarray:
        xq = np.ascontiguousarray(x_query, dtype=float)
        if xq.ndim != 2 or xq.shape[1] != self.p:
            raise ValueError(f"expected {self.p} columns, got shape {xq.shape}")
        return _predict_forest(xq, self.feature, self.threshold, self.left, self.right,
                               self.value, self.offsets)


def fit_random_forest(x, y, spec: NuisanceModelSpec | None = None) -> ForestFit:
    """Grow ``spec.n_trees`` regression trees on bootstrap samples.

    At each node ``mtry`` features are drawn without replacement and the split
    minimizing the children's summed squared error is taken, with thresholds
    at midpoints between consecutive distinct values. Nodes holding at most
    ``min_node_size`` samples, or a constant response, become leaves.
    Per-tree seeds come from ``spec.seed``, so results do not depend on how
    trees are scheduled.
    """
    spec = spec or NuisanceModelSpec("random_forest")
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("x must be an n x p matrix matching y")
    n, p = x.shape
    if n < 2:
        raise ValueError("need at least 2 observations to grow a forest")
    mtry = spec.mtry if spec.mtry is not None else max(1, p // 3)
    mtry = min(mtry, p)
    seeds = np.random.SeedSequence(spec.seed).generate_state(spec.n_trees, dtype=np.uint32)
    seeds = seeds.astype(np.int64)
    arrays = _grow_forest(x, y, mtry, spec.min_node_size, spec.bootstrap, seeds)
    return ForestFit(*arrays, n_trees=spec.n_trees, mtry=mtry,
                     min_node_size=spec.min_node_size, tree_seeds=seeds, p=p)
