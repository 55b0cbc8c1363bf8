"""Base prediction algorithms behind a uniform fit/predict contract.

Every learner is deterministic given (data, seed): refitting with identical
inputs reproduces identical predictions, which the ensemble layer relies on
for reproducible parallel fits.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..core import CLASSIFICATION, REGRESSION, SeedSpec
from ..exceptions import ConfigError, DataError, FitError
from .linear import OLS, Lasso, LogisticL2, Ridge
from .neighbors import KNN
from .trees import CartTree, GradientBoosting, RandomForest

REGRESSION_KINDS = ("ols", "ridge", "lasso", "knn", "cart_tree",
                    "random_forest", "gradient_boosting")
CLASSIFICATION_KINDS = ("logistic_l2", "knn", "cart_tree", "random_forest")

_ALLOWED_PARAMS = {
    "ols": (),
    "ridge": ("penalty",),
    "lasso": ("penalty", "max_iter", "tol"),
    "knn": ("n_neighbors",),
    "cart_tree": ("max_depth", "min_samples_leaf", "max_features"),
    "random_forest": ("n_estimators", "max_depth", "min_samples_leaf", "max_features"),
    "gradient_boosting": ("n_rounds", "learning_rate", "max_depth", "min_samples_leaf"),
    "logistic_l2": ("penalty", "max_iter"),
}


@dataclass(frozen=True)
class AlgorithmSpec:
    """A learner kind plus its hyper-parameters and CV fold count."""

    kind: str
    hyperparams: dict = field(default_factory=dict)
    cv_folds: int = 3

    def __post_init__(self):
        if self.kind not in _ALLOWED_PARAMS:
            raise ConfigError(f"unknown learner kind {self.kind!r}")
        bad = set(self.hyperparams) - set(_ALLOWED_PARAMS[self.kind])
        if bad:
            raise ConfigError(f"invalid hyperparams for {self.kind}: {sorted(bad)}")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be >= 2")

    @property
    def label(self) -> str:
        if not self.hyperparams:
            return self.kind
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.hyperparams.items()))
        return f"{self.kind}({inner})"


def default_specs(task: str):
    """The default learner zoo used by screening and the benchmark harness."""
    if task == REGRESSION:
        return [AlgorithmSpec("ols"), AlgorithmSpec("ridge"), AlgorithmSpec("lasso"),
                AlgorithmSpec("random_forest"), AlgorithmSpec("gradient_boosting")]
    return [AlgorithmSpec("logistic_l2"), AlgorithmSpec("knn"),
            AlgorithmSpec("cart_tree"), AlgorithmSpec("random_forest")]


@dataclass(frozen=True)
class ProbabilityVector:
    """A length-C probability vector with its descending-probability ranking."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise DataError("probability vector must be 1-D and nonempty")
        if p.min() < 0 or abs(p.sum() - 1.0) > 1e-9:
            raise DataError("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "probs", p)

    @property
    def ranking(self) -> np.ndarray:
        """1-based class indices sorted by descending probability, ties by class index."""
        return np.argsort(-self.probs, kind="stable") + 1


def _fingerprint(spec, child_seed, X, y):
    h = hashlib.blake2b(digest_size=8)
    h.update(spec.label.encode())
    h.update(str(child_seed).encode())
    h.update(np.ascontiguousarray(X).tobytes())
    h.update(np.ascontiguousarray(y).tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class FittedModel:
    """Immutable fitted learner; predict is a pure function of (state, input)."""

    spec: AlgorithmSpec
    task: str
    impl: object
    n_features: int
    train_fingerprint: str
    flags: tuple = ()

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DataError(
                f"expected {self.n_features} feature columns, got {X.shape[1]}"
            )
        return X

    def predict(self, X) -> np.ndarray:
        if self.task != REGRESSION:
            raise DataError("predict() is for regression models; use predict_proba")
        return self.impl.predict(self._check(X))

    def predict_proba_matrix(self, X) -> np.ndarray:
        if self.task != CLASSIFICATION:
            raise DataError("predict_proba is for classification models")
        return self.impl.predict_proba_matrix(self._check(X))

    def predict_proba(self, X):
        return [ProbabilityVector(row) for row in self.predict_proba_matrix(X)]


def _build_impl(spec: AlgorithmSpec, task: str, n_classes: int):
    hp = dict(spec.hyperparams)
    kind = spec.kind
    if kind == "ols":
        return OLS()
    if kind == "ridge":
        return Ridge(hp.get("penalty"), spec.cv_folds)
    if kind == "lasso":
        return Lasso(hp.get("penalty"), spec.cv_folds,
                     hp.get("max_iter", 1000), hp.get("tol", 1e-8))
    if kind == "knn":
        return KNN(task, n_classes, hp.get("n_neighbors", 5))
    if kind == "cart_tree":
        return CartTree(task, n_classes, hp.get("max_depth"),
                        hp.get("min_samples_leaf", 1), hp.get("max_features"))
    if kind == "random_forest":
        return RandomForest(task, n_classes, hp.get("n_estimators", 100),
                            hp.get("max_depth"), hp.get("min_samples_leaf", 1),
                            hp.get("max_features", "default"))
    if kind == "gradient_boosting":
        return GradientBoosting(hp.get("n_rounds", 100), hp.get("learning_rate", 0.1),
                                hp.get("max_depth", 3), hp.get("min_samples_leaf", 1))
    if kind == "logistic_l2":
        return LogisticL2(n_classes, hp.get("penalty"), spec.cv_folds,
                          hp.get("max_iter", 500))
    raise ConfigError(f"unknown learner kind {kind!r}")


def infer_task(spec: AlgorithmSpec, targets: np.ndarray) -> str:
    if spec.kind in ("ols", "ridge", "lasso", "gradient_boosting"):
        return REGRESSION
    if spec.kind == "logistic_l2":
        return CLASSIFICATION
    return CLASSIFICATION if np.issubdtype(np.asarray(targets).dtype, np.integer) else REGRESSION


def fit(spec: AlgorithmSpec, features, targets, seed: SeedSpec,
        task: str | None = None, n_classes: int | None = None) -> FittedModel:
    """Train one learner; deterministic given (spec, data, seed)."""
    X = np.ascontiguousarray(features, dtype=np.float64)
    y = np.asarray(targets)
    task = task or infer_task(spec, y)
    if task == REGRESSION:
        if spec.kind not in REGRESSION_KINDS:
            raise ConfigError(f"{spec.kind} does not support regression")
        y = np.ascontiguousarray(y, dtype=np.float64)
    else:
        if spec.kind not in CLASSIFICATION_KINDS:
            raise ConfigError(f"{spec.kind} does not support classification")
        y = np.ascontiguousarray(y, dtype=np.int64)
        if n_classes is None:
            n_classes = int(y.max())
        if np.unique(y).size < 2:
            raise FitError(f"{spec.kind}: training targets contain a single class")
    if X.shape[0] != y.shape[0] or X.shape[0] < 2:
        raise DataError(
            f"need matching feature/target rows with n >= 2, got {X.shape[0]} and {y.shape[0]}"
        )
    child = seed.child("fit")
    impl = _build_impl(spec, task, n_classes or 0)
    impl.fit(X, y, np.random.default_rng(child))
    flags = ("singular_fallback",) if getattr(impl, "singular_fallback", False) else ()
    return FittedModel(
        spec=spec, task=task, impl=impl, n_features=X.shape[1],
        train_fingerprint=_fingerprint(spec, child, X, y), flags=flags,
    )


def predict(model: FittedModel, features) -> np.ndarray:
    return model.predict(features)


def predict_proba(model: FittedModel, features):
    return model.predict_proba(features)


def loss(predictions, targets, kind: str) -> float:
    """mse for regression; neg_accuracy = 1 - argmax accuracy for classification."""
    targets = np.asarray(targets)
    if targets.size == 0:
        raise DataError("loss of empty input")
    if kind == "mse":
        preds = np.asarray(predictions, dtype=np.float64)
        if preds.shape != targets.shape:
            raise DataError("loss length mismatch")
        return float(np.mean((preds - targets) ** 2))
    if kind == "neg_accuracy":
        if isinstance(predictions, (list, tuple)) and predictions and \
                isinstance(predictions[0], ProbabilityVector):
            predictions = np.vstack([p.probs for p in predictions])
        preds = np.asarray(predictions)
        if preds.ndim == 2:
            labels = np.argmax(preds, axis=1) + 1
        else:
            labels = preds.astype(np.int64)
        if labels.shape != targets.shape:
            raise DataError("loss length mismatch")
        return float(1.0 - np.mean(labels == targets))
    raise ConfigError(f"unknown loss kind {kind!r}")
