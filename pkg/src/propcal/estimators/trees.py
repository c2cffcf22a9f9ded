"""Random forest and gradient-boosted trees for binary propensity models.

Both learners share one jitted CART builder. For 0/1 targets the Gini
criterion and the squared-error criterion pick the same split: each
maximizes ``sL**2/nL + sR**2/nR`` where ``s`` is the sum of the target in a
child. Leaf values are ``sum(num) / max(sum(den), 1e-12)`` over the rows in
the leaf, which gives the positive fraction for a forest (num=a, den=1) and
a one-step Newton update for boosting (num=residual, den=p(1-p)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List

import numba
import numpy as np

from ..dgp import expit, logit
from ..errors import DomainError, ShapeError
from .linear import check_labels

MIN_LEAF = 5
DEN_FLOOR = 1e-12


@numba.njit(cache=True)
def _splitmix64(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = state
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    return state, z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def _build(X, order, weight, target, num, den, max_depth, min_leaf, mtry, seed):
    n, d = X.shape
    # per-feature row lists restricted to in-bag rows, kept sorted by that feature
    m0 = 0
    for r in range(n):
        if weight[r] > 0:
            m0 += 1
    sorted_rows = np.empty((d, m0), dtype=np.int64)
    for f in range(d):
        k = 0
        for i in range(n):
            r = order[f, i]
            if weight[r] > 0:
                sorted_rows[f, k] = r
                k += 1

    cap = min(2 ** (max_depth + 1) - 1, 2 * (m0 // max(min_leaf, 1)) + 1)
    cap = max(cap, 1)
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    n_samples = np.zeros(cap)

    feats = np.arange(d)
    state = np.uint64(seed)
    goes_left = np.zeros(n, dtype=np.bool_)
    buf = np.empty(m0, dtype=np.int64)

    # explicit stack of (node id, start, end, depth)
    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m0
    st_depth[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]

        w_tot = 0.0
        s_tot = 0.0
        s_num = 0.0
        s_den = 0.0
        for i in range(start, end):
            r = sorted_rows[0, i]
            w = weight[r]
            w_tot += w
            s_tot += w * target[r]
            s_num += w * num[r]
            s_den += w * den[r]
        n_samples[node] = w_tot
        value[node] = s_num / max(s_den, 1e-12)

        if depth >= max_depth or w_tot < 2 * min_leaf:
            continue

        # partial Fisher-Yates for the candidate features
        for j in range(mtry):
            state, z = _splitmix64(state)
            k = j + np.int64(z % np.uint64(d - j))
            tmp = feats[j]
            feats[j] = feats[k]
            feats[k] = tmp

        parent_score = s_tot * s_tot / w_tot
        best_gain = 1e-12
        best_feat = -1
        best_thr = 0.0
        best_pos = 0
        for jj in range(mtry):
            f = feats[jj]
            w_left = 0.0
            s_left = 0.0
            for i in range(start, end - 1):
                r = sorted_rows[f, i]
                w_left += weight[r]
                s_left += weight[r] * target[r]
                if w_left < min_leaf:
                    continue
                w_right = w_tot - w_left
                if w_right < min_leaf:
                    break
                lo = X[r, f]
                hi = X[sorted_rows[f, i + 1], f]
                if not lo < hi:
                    continue
                s_right = s_tot - s_left
                gain = s_left * s_left / w_left + s_right * s_right / w_right - parent_score
                if gain > best_gain:
                    best_gain = gain
                    best_feat = f
                    best_thr = lo + (hi - lo) / 2.0
                    best_pos = i + 1
        if best_feat < 0:
            continue

        # left child is a prefix in the split feature's order; stable-partition the rest
        for i in range(start, end):
            goes_left[sorted_rows[best_feat, i]] = i < best_pos
        for f in range(d):
            if f == best_feat:
                continue
            li = start
            bi = 0
            for i in range(start, end):
                r = sorted_rows[f, i]
                if goes_left[r]:
                    sorted_rows[f, li] = r
                    li += 1
                else:
                    buf[bi] = r
                    bi += 1
            for i in range(bi):
                sorted_rows[f, li + i] = buf[i]

        feature[node] = best_feat
        threshold[node] = best_thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        # push right first so the left subtree is numbered first
        st_node[top] = rc
        st_start[top] = best_pos
        st_end[top] = end
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lc
        st_start[top] = start
        st_end[top] = best_pos
        st_depth[top] = depth + 1
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), n_samples[:n_nodes].copy())


@numba.njit(cache=True)
def _apply(X, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@dataclass(frozen=True, eq=False)
class Tree:
    """Array-encoded binary tree; ``feature == -1`` marks a leaf.

    ``n_samples`` holds the (bootstrap-weighted) row count reaching each node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def n_nodes(self):
        return len(self.feature)

    def is_leaf(self):
        return self.feature < 0

    def depth(self):
        depths = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def predict(self, X):
        return _apply(X, self.feature, self.threshold, self.left, self.right, self.value)


def presort(X):
    """Per-feature stable argsort, shape (d, n); computed once per fit."""
    X = np.asarray(X, dtype=np.float64)
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T, dtype=np.int64)


def build_tree(X, weight, target, num, den, max_depth, min_leaf=MIN_LEAF, mtry=None, seed=0,
               order=None) -> Tree:
    """Grow one tree on rows with positive ``weight`` (bootstrap multiplicities)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    d = X.shape[1]
    mtry = d if mtry is None else int(mtry)
    order = presort(X) if order is None else order
    parts = _build(X, order,
                   np.ascontiguousarray(weight, dtype=np.float64),
                   np.ascontiguousarray(target, dtype=np.float64),
                   np.ascontiguousarray(num, dtype=np.float64),
                   np.ascontiguousarray(den, dtype=np.float64),
                   int(max_depth), int(min_leaf), mtry, np.uint64(seed))
    return Tree(*parts)


@dataclass(frozen=True, eq=False)
class TreeEnsemble:
    kind: str  # "random_forest" or "gradient_boosting"
    trees: List[Tree]
    n_features: int
    learning_rate: float = 1.0
    base_score: float = 0.0

    def truncated(self, n_trees: int) -> "TreeEnsemble":
        """The ensemble made of the first ``n_trees`` trees.

        Trees are fit independently (forest) or stagewise (boosting), so the
        prefix equals a model fit with ``n_trees`` from the same seed.
        """
        return TreeEnsemble(self.kind, self.trees[:n_trees], self.n_features,
                            self.learning_rate, self.base_score)

    def raw_predict(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ShapeError(
                f"expected a matrix with {self.n_features} columns, got shape {X.shape}")
        if self.kind == "random_forest":
            acc = np.zeros(len(X))
            for t in self.trees:
                acc += t.predict(X)
            return acc / len(self.trees)
        F = np.full(len(X), self.base_score)
        for t in self.trees:
            F += self.learning_rate * t.predict(X)
        return F


def _check_size(depth, n_trees, allow_zero=False):
    if int(depth) != depth or depth < 1:
        raise DomainError(f"depth must be a positive integer, got {depth!r}")
    if int(n_trees) != n_trees or n_trees < (0 if allow_zero else 1):
        raise DomainError(f"invalid number of trees {n_trees!r}")


def fit_random_forest(X, a, depth, n_trees, seed=0, min_leaf=MIN_LEAF) -> TreeEnsemble:
    """Bootstrap-aggregated Gini trees with ceil(sqrt(d)) candidate features per split."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, d = X.shape
    a = check_labels(a, n)
    _check_size(depth, n_trees)
    mtry = int(math.ceil(math.sqrt(d)))
    ones = np.ones(n)
    order = presort(X)
    trees = []
    for t in range(int(n_trees)):
        # per-tree stream so the first k trees do not depend on n_trees
        ss = np.random.SeedSequence([int(seed), t])
        rng = np.random.Generator(np.random.PCG64(ss))
        counts = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(float)
        tree_seed = int(ss.generate_state(1, dtype=np.uint64)[0])
        trees.append(build_tree(X, counts, a, a, ones, depth, min_leaf, mtry, tree_seed, order))
    return TreeEnsemble("random_forest", trees, d)


def fit_gradient_boosting(X, a, depth, n_trees, learning_rate=0.1, seed=0,
                          min_leaf=MIN_LEAF, trace=None) -> TreeEnsemble:
    """Stagewise log-loss boosting with Newton leaf values.

    ``trace``, if a list, receives the training mean log-loss after each stage.
    ``seed`` only feeds the (unused with all features) candidate shuffle.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, d = X.shape
    a = check_labels(a, n)
    _check_size(depth, n_trees, allow_zero=True)
    if not 0 < learning_rate <= 1:
        raise DomainError(f"learning_rate must be in (0, 1], got {learning_rate!r}")
    base = float(logit(a.mean()))
    F = np.full(n, base)
    ones = np.ones(n)
    order = presort(X)
    trees = []
    for t in range(int(n_trees)):
        p = expit(F)
        resid = a - p
        hess = p * (1.0 - p)
        tree = build_tree(X, ones, resid, resid, hess, depth, min_leaf, d, int(seed) + t, order)
        trees.append(tree)
        F += learning_rate * tree.predict(X)
        if trace is not None:
            trace.append(float(np.mean(np.logaddexp(0.0, F) - a * F)))
    return TreeEnsemble("gradient_boosting", trees, d, float(learning_rate), base)
