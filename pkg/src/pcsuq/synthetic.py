"""Synthetic dataset generators used by tests, ablations, and demos."""

import numpy as np

from .core import CLASSIFICATION, REGRESSION, CATEGORICAL, NUMERIC, Dataset, SeedSpec


def _rng(seed):
    if isinstance(seed, SeedSpec):
        return seed.rng("synthetic")
    return np.random.default_rng(seed)


def linear_homoscedastic(n, seed, d=5, noise=1.0):
    rng = _rng(seed)
    X = rng.normal(size=(n, d))
    w = np.linspace(1.0, 2.0, d)
    y = X @ w + noise * rng.normal(size=n)
    return Dataset(X, y, REGRESSION)


def linear_heteroscedastic(n, seed, d=5):
    """Linear signal with noise scale growing in |x1|."""
    rng = _rng(seed)
    X = rng.normal(size=(n, d))
    w = np.linspace(1.0, 2.0, d)
    y = X @ w + (0.2 + np.abs(X[:, 0])) * rng.normal(size=n)
    return Dataset(X, y, REGRESSION)


def step_function(n, seed, d=3):
    rng = _rng(seed)
    X = rng.uniform(-2.0, 2.0, size=(n, d))
    y = 3.0 * (X[:, 0] > 0) + 0.3 * rng.normal(size=n)
    return Dataset(X, y, REGRESSION)


def friedman(n, seed, noise=1.0):
    rng = _rng(seed)
    X = rng.uniform(size=(n, 5))
    y = (10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2
         + 10 * X[:, 3] + 5 * X[:, 4] + noise * rng.normal(size=n))
    return Dataset(X, y, REGRESSION)


def pure_noise(n, seed, d=5):
    rng = _rng(seed)
    return Dataset(rng.normal(size=(n, d)), rng.normal(size=n), REGRESSION)


REGRESSION_GENERATORS = {
    "linear_homoscedastic": linear_homoscedastic,
    "linear_heteroscedastic": linear_heteroscedastic,
    "step_function": step_function,
    "friedman": friedman,
    "pure_noise": pure_noise,
}


def two_scale_groups(n, seed, low=1.0, high=10.0, d_noise=2):
    """y = s * eps with the scale s split into low/high groups (feature 0)."""
    rng = _rng(seed)
    s = np.where(rng.uniform(size=n) < 0.5, low, high)
    y = s * rng.normal(size=n)
    X = np.column_stack([s, rng.normal(size=(n, d_noise))])
    kinds = (CATEGORICAL,) + (NUMERIC,) * d_noise
    names = ("scale",) + tuple(f"noise{j + 1}" for j in range(d_noise))
    return Dataset(X, y, REGRESSION, feature_names=names, feature_kinds=kinds)


def binary_dominant(n, seed, effect=10.0, d_noise=3):
    """A binary feature with a large additive effect dominates importance."""
    rng = _rng(seed)
    g = (rng.uniform(size=n) < 0.5).astype(np.float64)
    X = np.column_stack([g + 1.0, rng.normal(size=(n, d_noise))])
    y = effect * g + 0.5 * rng.normal(size=n)
    kinds = (CATEGORICAL,) + (NUMERIC,) * d_noise
    names = ("flag",) + tuple(f"noise{j + 1}" for j in range(d_noise))
    return Dataset(X, y, REGRESSION, feature_names=names, feature_kinds=kinds)


def single_active_feature(n, seed, active=2, d=5):
    """y depends on one feature only; the rest are pure noise."""
    rng = _rng(seed)
    X = rng.normal(size=(n, d))
    y = 4.0 * np.sin(X[:, active]) + 0.3 * rng.normal(size=n)
    return Dataset(X, y, REGRESSION)


def gaussian_blobs(n, seed, n_classes=3, d=4, spread=1.0):
    """Gaussian class clusters for classification tests."""
    rng = _rng(seed)
    centers = rng.normal(scale=4.0, size=(n_classes, d))
    y = rng.integers(1, n_classes + 1, size=n)
    X = centers[y - 1] + spread * rng.normal(size=(n, d))
    return Dataset(X, y, CLASSIFICATION, num_classes=n_classes)
