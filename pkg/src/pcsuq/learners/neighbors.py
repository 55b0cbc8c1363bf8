"""k-nearest-neighbor learner (Euclidean metric, distance ties broken by index)."""

import numpy as np

from ..core import CLASSIFICATION

_CHUNK = 256


class KNN:
    def __init__(self, task, n_classes=0, n_neighbors=5):
        self.task = task
        self.n_classes = n_classes
        self.n_neighbors = n_neighbors
        self.X_train = None
        self.y_train = None

    def fit(self, X, y, rng=None):
        self.X_train = X.copy()
        self.y_train = y.copy()
        return self

    def _neighbor_targets(self, X):
        k = min(self.n_neighbors, self.X_train.shape[0])
        out = np.empty((X.shape[0], k), dtype=self.y_train.dtype)
        for start in range(0, X.shape[0], _CHUNK):
            chunk = X[start:start + _CHUNK]
            d2 = ((chunk[:, None, :] - self.X_train[None, :, :]) ** 2).sum(axis=2)
            order = np.argsort(d2, axis=1, kind="stable")[:, :k]
            out[start:start + _CHUNK] = self.y_train[order]
        return out

    def predict(self, X):
        neigh = self._neighbor_targets(X)
        if self.task == CLASSIFICATION:
            return np.array([np.bincount(row, minlength=self.n_classes + 1).argmax()
                             for row in neigh])
        return neigh.mean(axis=1)

    def predict_proba_matrix(self, X):
        neigh = self._neighbor_targets(X)
        k = neigh.shape[1]
        probs = np.zeros((X.shape[0], self.n_classes))
        for c in range(1, self.n_classes + 1):
            probs[:, c - 1] = (neigh == c).sum(axis=1) / k
        return probs

    def to_state(self):
        return {
            "n_neighbors": self.n_neighbors,
            "X_train": self.X_train.tolist(),
            "y_train": self.y_train.tolist(),
        }

    def from_state(self, state):
        self.n_neighbors = state["n_neighbors"]
        self.X_train = np.asarray(state["X_train"], dtype=np.float64)
        dtype = np.int64 if self.task == CLASSIFICATION else np.float64
        self.y_train = np.asarray(state["y_train"], dtype=dtype)
        return self
