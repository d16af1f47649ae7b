"""Greedy regression trees on squared error.

Split search enumerates every midpoint between consecutive distinct values
of every candidate feature.  Feature columns are argsorted once per fit and
the node's rows are filtered out of those orders, so no sort happens inside
the recursion.

The gain of a split with left/right gradient sums GL, GR and counts nL, nR
is ``GL^2/(nL+lam) + GR^2/(nR+lam) - G^2/(n+lam)``.  With ``lam = 0`` this
is the plain variance reduction and leaves are node means; the
second-order variant halves it and subtracts ``gamma``, with leaves
``G / (n + lam)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray  # rows with x <= threshold go left
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):  # children always follow their parent
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise InvalidArgument(f"expected an (n, {self.n_features}) matrix, got shape {X.shape}")
        rows = np.arange(X.shape[0])
        node = np.zeros(X.shape[0], dtype=np.intp)
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                break
            go_left = X[rows, np.where(internal, f, 0)] <= self.threshold[node]
            child = np.where(go_left, self.left[node], self.right[node])
            node = np.where(internal, child, node)
        return self.value[node]

    def feature_gain(self) -> np.ndarray:
        total = np.zeros(self.n_features)
        internal = self.feature >= 0
        np.add.at(total, self.feature[internal], self.gain[internal])
        return total

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
            "n_features": self.n_features,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.intp),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.intp),
            right=np.asarray(d["right"], dtype=np.intp),
            value=np.asarray(d["value"], dtype=float),
            gain=np.asarray(d["gain"], dtype=float),
            n_features=int(d["n_features"]),
        )


def presort(X: np.ndarray) -> np.ndarray:
    """Stable argsort of every column, shape (n_features, n)."""
    return np.argsort(X, axis=0, kind="stable").T.copy()


def check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise InvalidArgument(f"X must be 2-D, got shape {X.shape}")
    if X.shape[0] == 0:
        raise InvalidArgument("cannot fit on empty data")
    if y.shape != (X.shape[0],):
        raise InvalidArgument(f"y must have shape ({X.shape[0]},), got {y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidArgument("X and y must be finite")
    return X, y


class TreeBuilder:
    """Grows one tree; reusable across boosting rounds on the same X."""

    def __init__(self, X, order=None, max_depth=None, min_samples_leaf=1,
                 reg_lambda=0.0, gamma=0.0, second_order=False,
                 max_features=None, rng=None):
        if max_depth is not None and max_depth < 0:
            raise InvalidArgument("max_depth must be >= 0 or None")
        if min_samples_leaf < 1:
            raise InvalidArgument("min_samples_leaf must be >= 1")
        if reg_lambda < 0 or gamma < 0:
            raise InvalidArgument("lambda and gamma must be nonnegative")
        self.X = X
        self.n, self.p = X.shape
        self.order = presort(X) if order is None else order
        self.max_depth = np.inf if max_depth is None else max_depth
        self.min_leaf = int(min_samples_leaf)
        self.lam = float(reg_lambda)
        self.gamma = float(gamma)
        self.scale = 0.5 if second_order else 1.0
        if max_features is not None and not 1 <= max_features <= self.p:
            raise InvalidArgument(f"max_features must lie in [1, {self.p}]")
        self.max_features = max_features
        self.rng = rng

    def fit(self, g: np.ndarray) -> Tree:
        self.g = g
        self.nodes: list[list] = []
        self._grow(np.ones(self.n, dtype=bool), self.n, 0)
        cols = list(zip(*self.nodes))
        return Tree(
            feature=np.array(cols[0], dtype=np.intp),
            threshold=np.array(cols[1], dtype=float),
            left=np.array(cols[2], dtype=np.intp),
            right=np.array(cols[3], dtype=np.intp),
            value=np.array(cols[4], dtype=float),
            gain=np.array(cols[5], dtype=float),
            n_features=self.p,
        )

    def _leaf_value(self, total, count):
        return total / (count + self.lam)

    def _grow(self, mask, count, depth) -> int:
        node_id = len(self.nodes)
        g_node = self.g[mask]
        total = float(g_node.sum())
        self.nodes.append([-1, 0.0, -1, -1, self._leaf_value(total, count), 0.0])
        if depth >= self.max_depth or count < 2 * self.min_leaf or np.ptp(g_node) == 0.0:
            return node_id
        split = self._best_split(mask, count, total)
        if split is None:
            return node_id
        feature, threshold, gain = split
        go_left = mask & (self.X[:, feature] <= threshold)
        go_right = mask & ~go_left
        n_left = int(go_left.sum())
        self.nodes[node_id][:2] = [feature, threshold]
        self.nodes[node_id][5] = gain
        self.nodes[node_id][2] = self._grow(go_left, n_left, depth + 1)
        self.nodes[node_id][3] = self._grow(go_right, count - n_left, depth + 1)
        return node_id

    def _candidates(self):
        if self.max_features is None or self.max_features == self.p:
            return np.arange(self.p)
        return np.sort(self.rng.choice(self.p, size=self.max_features, replace=False))

    def _best_split(self, mask, m, total):
        feats = self._candidates()
        ordered = self.order[feats]
        rows = ordered[mask[ordered]].reshape(len(feats), m)
        xs = self.X[rows, feats[:, None]]
        gs = self.g[rows]
        if self.lam == 0.0:
            # Variance reduction is shift invariant; centring keeps the
            # cumulative sums well conditioned.
            gs = gs - total / m
            total = 0.0
        cum = np.cumsum(gs, axis=1)[:, :-1]
        n_left = np.arange(1, m)
        n_right = m - n_left
        lam = self.lam
        raw = cum * cum / (n_left + lam) + (total - cum) ** 2 / (n_right + lam) - total * total / (m + lam)
        gain = self.scale * raw - self.gamma
        valid = (xs[:, 1:] > xs[:, :-1]) & (n_left >= self.min_leaf) & (n_right >= self.min_leaf)
        gain = np.where(valid, gain, -np.inf)
        best = int(np.argmax(gain))
        fi, pos = divmod(best, m - 1)
        best_gain = float(gain[fi, pos])
        if not best_gain > 0.0:
            return None
        lo, hi = xs[fi, pos], xs[fi, pos + 1]
        threshold = 0.5 * (lo + hi)
        if not lo <= threshold < hi:
            threshold = lo
        return int(feats[fi]), float(threshold), best_gain


def fit_regression_tree(X, y, max_depth=None, min_samples_leaf=1) -> Tree:
    """CART regression tree with squared-error splits and mean leaves."""
    X, y = check_xy(X, y)
    return TreeBuilder(X, max_depth=max_depth, min_samples_leaf=min_samples_leaf).fit(y)
