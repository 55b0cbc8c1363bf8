"""CART trees, random forests, and gradient boosting.

Trees are grown with an explicit stack and the split-search kernels from
:mod:`pcsuq.kernels`. Tie-breaking is fixed: lowest feature index, then lowest
threshold (the kernels scan features in ascending order and take the first
minimal-cost split), so fits are deterministic given the seed.
"""

import numpy as np

from .. import kernels
from ..core import CLASSIFICATION, REGRESSION
from ..exceptions import ConfigError


def _resolve_max_features(max_features, d, task):
    if max_features is None:
        return d
    if max_features == "all":
        return d
    if max_features == "sqrt":
        return max(1, int(np.sqrt(d)))
    if max_features == "third":
        return max(1, d // 3)
    m = int(max_features)
    if m < 1:
        raise ConfigError(f"max_features must be >= 1, got {max_features}")
    return min(m, d)


class Tree:
    """A fitted CART tree stored as flat node arrays."""

    def __init__(self, task, n_classes=0):
        self.task = task
        self.n_classes = n_classes
        self.feature = None
        self.threshold = None
        self.left = None
        self.right = None
        self.value = None
        self.importance = None

    def fit(self, X, y, max_depth, min_samples_leaf, max_features, rng):
        n, d = X.shape
        m_feat = _resolve_max_features(max_features, d, self.task)
        is_clf = self.task == CLASSIFICATION
        ycodes = (y - 1).astype(np.int64) if is_clf else None
        all_feats = np.arange(d, dtype=np.int64)

        feature, threshold, left, right, value = [], [], [], [], []
        importance = np.zeros(d)

        def leaf_value(rows):
            if is_clf:
                counts = np.bincount(ycodes[rows], minlength=self.n_classes)
                return counts / rows.size
            return float(np.sum(y[rows]) / rows.size)

        def node_impurity(rows):
            if is_clf:
                counts = np.bincount(ycodes[rows], minlength=self.n_classes)
                return rows.size * (1.0 - np.sum((counts / rows.size) ** 2))
            yv = y[rows]
            mu = np.sum(yv) / rows.size
            return float(np.sum((yv - mu) ** 2))

        # stack entries: (rows, depth, parent_node, is_left_child)
        stack = [(np.arange(n, dtype=np.int64), 0, -1, False)]
        while stack:
            rows, depth, parent, is_left = stack.pop()
            idx = len(feature)
            if parent >= 0:
                if is_left:
                    left[parent] = idx
                else:
                    right[parent] = idx
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(leaf_value(rows))

            if max_depth is not None and depth >= max_depth:
                continue
            if rows.size < 2 * min_samples_leaf:
                continue
            y_rows = ycodes[rows] if is_clf else y[rows]
            if is_clf:
                if np.all(y_rows == y_rows[0]):
                    continue
            elif y_rows.max() == y_rows.min():
                continue
            if m_feat < d:
                feats = np.sort(rng.permutation(d)[:m_feat]).astype(np.int64)
            else:
                feats = all_feats
            X_rows = X[rows]
            if is_clf:
                found, f, thr, cost = kernels.best_split_gini(
                    X_rows, y_rows, self.n_classes, feats, min_samples_leaf
                )
            else:
                found, f, thr, cost = kernels.best_split_mse(
                    X_rows, y_rows, feats, min_samples_leaf
                )
            if not found:
                continue
            importance[f] += node_impurity(rows) - cost
            feature[idx] = f
            threshold[idx] = thr
            mask = X_rows[:, f] <= thr
            # right pushed first so the left child is processed next (preorder)
            stack.append((rows[~mask], depth + 1, idx, False))
            stack.append((rows[mask], depth + 1, idx, True))

        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        if is_clf:
            self.value = np.vstack(value)
        else:
            self.value = np.asarray(value)
        self.importance = importance
        return self

    def _leaf_index(self, X):
        idx = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feats = self.feature[idx]
            internal = feats >= 0
            if not internal.any():
                return idx
            rows = np.flatnonzero(internal)
            f = feats[rows]
            go_left = X[rows, f] <= self.threshold[idx[rows]]
            idx[rows] = np.where(go_left, self.left[idx[rows]], self.right[idx[rows]])

    def predict(self, X):
        return self.value[self._leaf_index(X)]

    def to_state(self):
        state = {
            "task": self.task,
            "n_classes": self.n_classes,
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }
        return state

    @classmethod
    def from_state(cls, state):
        t = cls(state["task"], state["n_classes"])
        t.feature = np.asarray(state["feature"], dtype=np.int64)
        t.threshold = np.asarray(state["threshold"], dtype=np.float64)
        t.left = np.asarray(state["left"], dtype=np.int64)
        t.right = np.asarray(state["right"], dtype=np.int64)
        t.value = np.asarray(state["value"], dtype=np.float64)
        t.importance = None
        return t


class CartTree:
    """Single CART tree learner (regression MSE / classification Gini)."""

    def __init__(self, task, n_classes=0, max_depth=None, min_samples_leaf=1,
                 max_features=None):
        self.task = task
        self.n_classes = n_classes
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.tree = None

    def fit(self, X, y, rng):
        self.tree = Tree(self.task, self.n_classes).fit(
            X, y, self.max_depth, self.min_samples_leaf, self.max_features, rng
        )
        return self

    def predict(self, X):
        return self.tree.predict(X)

    def predict_proba_matrix(self, X):
        return self.tree.predict(X)

    @property
    def feature_importance(self):
        imp = self.tree.importance
        s = imp.sum()
        return imp / s if s > 0 else imp

    def to_state(self):
        return {"tree": self.tree.to_state()}

    def from_state(self, state):
        self.tree = Tree.from_state(state["tree"])
        return self


class RandomForest:
    """Bagged CART trees with per-node feature subsampling."""

    def __init__(self, task, n_classes=0, n_estimators=100, max_depth=None,
                 min_samples_leaf=1, max_features="default"):
        self.task = task
        self.n_classes = n_classes
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        if max_features == "default":
            max_features = "third" if task == REGRESSION else "sqrt"
        self.max_features = max_features
        self.trees = []

    def fit(self, X, y, rng):
        n = X.shape[0]
        self.trees = []
        for _ in range(self.n_estimators):
            rows = rng.integers(0, n, size=n)
            tree = Tree(self.task, self.n_classes).fit(
                X[rows], y[rows], self.max_depth, self.min_samples_leaf,
                self.max_features, rng,
            )
            self.trees.append(tree)
        return self

    def predict(self, X):
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)

    def predict_proba_matrix(self, X):
        acc = np.zeros((X.shape[0], self.n_classes))
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)

    @property
    def feature_importance(self):
        """Mean impurity-decrease importance across trees, normalized to sum 1."""
        total = np.zeros_like(self.trees[0].importance)
        for tree in self.trees:
            s = tree.importance.sum()
            if s > 0:
                total += tree.importance / s
        s = total.sum()
        return total / s if s > 0 else total

    def to_state(self):
        return {"trees": [t.to_state() for t in self.trees]}

    def from_state(self, state):
        self.trees = [Tree.from_state(s) for s in state["trees"]]
        return self


class GradientBoosting:
    """Squared-loss boosting with shallow trees (regression only)."""

    def __init__(self, n_rounds=100, learning_rate=0.1, max_depth=3,
                 min_samples_leaf=1):
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.init_value = 0.0
        self.trees = []

    def fit(self, X, y, rng):
        self.init_value = float(np.mean(y))
        current = np.full(X.shape[0], self.init_value)
        self.trees = []
        for _ in range(self.n_rounds):
            residual = y - current
            tree = Tree(REGRESSION).fit(
                X, residual, self.max_depth, self.min_samples_leaf, None, rng
            )
            self.trees.append(tree)
            current += self.learning_rate * tree.predict(X)
        return self

    def predict(self, X):
        acc = np.full(X.shape[0], self.init_value)
        for tree in self.trees:
            acc += self.learning_rate * tree.predict(X)
        return acc

    def to_state(self):
        return {
            "init_value": self.init_value,
            "learning_rate": self.learning_rate,
            "trees": [t.to_state() for t in self.trees],
        }

    def from_state(self, state):
        self.init_value = state["init_value"]
        self.learning_rate = state["learning_rate"]
        self.trees = [Tree.from_state(s) for s in state["trees"]]
        return self
