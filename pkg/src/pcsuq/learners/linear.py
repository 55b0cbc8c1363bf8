"""Linear learners: OLS, ridge, lasso, and L2 logistic regression.

Penalized learners pick their penalty from a fixed grid of 10 log-spaced
values in [1e-4, 1e3] by k-fold cross-validation (contiguous folds, so no seed
material is consumed). Features are standardized internally; coefficients are
mapped back to the original scale for prediction.
"""

import numpy as np
from scipy.optimize import minimize

from .. import kernels
from ..exceptions import FitError

PENALTY_GRID = tuple(np.logspace(-4, 3, 10))


def _standardize(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (X - mu) / sd, mu, sd


def _cv_folds(n, folds):
    return [f for f in np.array_split(np.arange(n), min(folds, n)) if f.size > 0]


class OLS:
    """Least squares via SVD; rank-deficient designs fall back to minimum norm."""

    def __init__(self):
        self.coef = None
        self.intercept = 0.0
        self.singular_fallback = False

    def fit(self, X, y, rng=None):
        design = np.column_stack([np.ones(X.shape[0]), X])
        sol, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        self.singular_fallback = rank < design.shape[1]
        self.intercept = float(sol[0])
        self.coef = sol[1:]
        return self

    def predict(self, X):
        return self.intercept + X @ self.coef

    def to_state(self):
        return {
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "singular_fallback": self.singular_fallback,
        }

    def from_state(self, state):
        self.coef = np.asarray(state["coef"])
        self.intercept = state["intercept"]
        self.singular_fallback = state["singular_fallback"]
        return self


class _PenalizedRegression:
    """Shared CV-over-grid machinery for ridge and lasso."""

    def __init__(self, penalty=None, cv_folds=3):
        self.penalty = penalty
        self.cv_folds = cv_folds
        self.chosen_penalty = None
        self.coef = None
        self.intercept = 0.0

    def _solve(self, Xs, yc, lam):
        raise NotImplementedError

    def fit(self, X, y, rng=None):
        if self.penalty is not None:
            lam = float(self.penalty)
        else:
            folds = _cv_folds(X.shape[0], self.cv_folds)
            if len(folds) < 2:
                lam = PENALTY_GRID[len(PENALTY_GRID) // 2]
            else:
                errors = np.zeros(len(PENALTY_GRID))
                for f, val in enumerate(folds):
                    mask = np.ones(X.shape[0], dtype=bool)
                    mask[val] = False
                    Xtr, ytr = X[mask], y[mask]
                    Xs, mu, sd = _standardize(Xtr)
                    ym = ytr.mean()
                    Xv = (X[val] - mu) / sd
                    for g, lam in enumerate(PENALTY_GRID):
                        beta = self._solve(Xs, ytr - ym, lam)
                        pred = ym + Xv @ beta
                        errors[g] += np.mean((y[val] - pred) ** 2)
                lam = PENALTY_GRID[int(np.argmin(errors))]
        self.chosen_penalty = lam
        Xs, mu, sd = _standardize(X)
        ym = y.mean()
        beta = self._solve(Xs, y - ym, lam)
        self.coef = beta / sd
        self.intercept = float(ym - mu @ self.coef)
        return self

    def predict(self, X):
        return self.intercept + X @ self.coef

    def to_state(self):
        return {
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "chosen_penalty": self.chosen_penalty,
        }

    def from_state(self, state):
        self.coef = np.asarray(state["coef"])
        self.intercept = state["intercept"]
        self.chosen_penalty = state["chosen_penalty"]
        return self


class Ridge(_PenalizedRegression):
    """Minimizes ||y - Xb||^2 + lam * ||b||^2 on standardized features."""

    def _solve(self, Xs, yc, lam):
        d = Xs.shape[1]
        return np.linalg.solve(Xs.T @ Xs + lam * np.eye(d), Xs.T @ yc)


class Lasso(_PenalizedRegression):
    """Minimizes (1/2n)||y - Xb||^2 + lam * ||b||_1 by coordinate descent."""

    def __init__(self, penalty=None, cv_folds=3, max_iter=1000, tol=1e-8):
        super().__init__(penalty, cv_folds)
        self.max_iter = max_iter
        self.tol = tol

    def _solve(self, Xs, yc, lam):
        return kernels.lasso_cd(
            np.ascontiguousarray(Xs), np.ascontiguousarray(yc, dtype=np.float64),
            float(lam), self.max_iter, self.tol,
        )


class LogisticL2:
    """Multinomial logistic regression with an L2 penalty, fit by L-BFGS."""

    def __init__(self, n_classes, penalty=None, cv_folds=3, max_iter=500):
        self.n_classes = n_classes
        self.penalty = penalty
        self.cv_folds = cv_folds
        self.max_iter = max_iter
        self.chosen_penalty = None
        self.weights = None  # (d+1, C); row 0 holds intercepts
        self.mu = None
        self.sd = None

    @staticmethod
    def _nll_grad(w_flat, Xd, onehot, lam):
        n, dp1 = Xd.shape
        C = onehot.shape[1]
        W = w_flat.reshape(dp1, C)
        z = Xd @ W
        z -= z.max(axis=1, keepdims=True)
        expz = np.exp(z)
        denom = expz.sum(axis=1, keepdims=True)
        logp = z - np.log(denom)
        nll = -np.sum(onehot * logp)
        P = expz / denom
        grad = Xd.T @ (P - onehot)
        pen = W.copy()
        pen[0, :] = 0.0
        nll += 0.5 * lam * np.sum(pen * pen)
        grad += lam * pen
        return nll, grad.ravel()

    def _optimize(self, Xd, onehot, lam):
        w0 = np.zeros(Xd.shape[1] * self.n_classes)
        res = minimize(
            self._nll_grad, w0, args=(Xd, onehot, lam), jac=True,
            method="L-BFGS-B", options={"maxiter": self.max_iter},
        )
        return res.x.reshape(Xd.shape[1], self.n_classes)

    def fit(self, X, y, rng=None):
        if np.unique(y).size < 2:
            raise FitError("logistic regression needs at least two classes in training data")
        Xs, self.mu, self.sd = _standardize(X)
        Xd = np.column_stack([np.ones(X.shape[0]), Xs])
        onehot = (y[:, None] == np.arange(1, self.n_classes + 1)[None, :]).astype(np.float64)
        if self.penalty is not None:
            lam = float(self.penalty)
        else:
            folds = _cv_folds(X.shape[0], self.cv_folds)
            if len(folds) < 2:
                lam = PENALTY_GRID[len(PENALTY_GRID) // 2]
            else:
                scores = np.zeros(len(PENALTY_GRID))
                for val in folds:
                    mask = np.ones(X.shape[0], dtype=bool)
                    mask[val] = False
                    if np.unique(y[mask]).size < 2:
                        raise FitError("single-class CV fold in logistic regression")
                    for g, lam in enumerate(PENALTY_GRID):
                        W = self._optimize(Xd[mask], onehot[mask], lam)
                        nll, _ = self._nll_grad(W.ravel(), Xd[val], onehot[val], 0.0)
                        scores[g] += nll
                lam = PENALTY_GRID[int(np.argmin(scores))]
        self.chosen_penalty = lam
        self.weights = self._optimize(Xd, onehot, lam)
        return self

    def predict_proba_matrix(self, X):
        Xd = np.column_stack([np.ones(X.shape[0]), (X - self.mu) / self.sd])
        z = Xd @ self.weights
        z -= z.max(axis=1, keepdims=True)
        expz = np.exp(z)
        return expz / expz.sum(axis=1, keepdims=True)

    def predict(self, X):
        return np.argmax(self.predict_proba_matrix(X), axis=1) + 1

    def to_state(self):
        return {
            "n_classes": self.n_classes,
            "weights": self.weights.tolist(),
            "mu": self.mu.tolist(),
            "sd": self.sd.tolist(),
            "chosen_penalty": self.chosen_penalty,
        }

    def from_state(self, state):
        self.n_classes = state["n_classes"]
        self.weights = np.asarray(state["weights"])
        self.mu = np.asarray(state["mu"])
        self.sd = np.asarray(state["sd"])
        self.chosen_penalty = state["chosen_penalty"]
        return self
