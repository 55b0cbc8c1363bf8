"""Conformal baselines: split, studentized, majority vote, the train-only
bootstrap PCS variant, and the classification set methods Top-K, APS, RAPS.

All calibration thresholds use the repo-wide higher-order-statistic quantile,
so benchmark deltas against the PCS methods are attributable to method, not
plumbing.
"""

from dataclasses import dataclass

import numpy as np

from . import learners
from .core import (CLASSIFICATION, REGRESSION, Dataset, DataSplit, SeedSpec,
                   quantile, split_indices)
from .exceptions import CalibrationError, ConfigError, DataError
from .learners import AlgorithmSpec
from .pcs import (Interval, _choose_by_width, _full_bag_triplets, _min_gamma_vec,
                  _nonempty_subsets, _ranking_and_cumsum, aps_scores,
                  fit_bootstrap_ensemble, prediction_sets_from_probs, rank_of,
                  screen_models)

SIGMA_FLOOR = 1e-8


@dataclass(frozen=True)
class IntervalUnion:
    """Sorted, pairwise-disjoint closed intervals."""

    intervals: tuple

    @classmethod
    def from_pieces(cls, pieces):
        """Normalize arbitrary (lower, upper) pieces: sort and merge overlaps."""
        pieces = sorted((float(l), float(u)) for l, u in pieces)
        merged = []
        for l, u in pieces:
            if u < l:
                raise DataError(f"interval piece out of order: [{l}, {u}]")
            if merged and l <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], u)
            else:
                merged.append([l, u])
        return cls(tuple(Interval(l, u) for l, u in merged))

    @property
    def total_width(self) -> float:
        return sum(iv.width for iv in self.intervals)

    def contains(self, y: float) -> bool:
        return any(iv.contains(y) for iv in self.intervals)


def majority_vote_union(intervals: np.ndarray) -> IntervalUnion:
    """{y: strictly more than M/2 of the closed intervals cover y}, exactly.

    Endpoint sweep over atomic pieces (endpoints and the open gaps between
    them); an open gap can only win the vote if both bounding endpoints do, so
    the result is a closed-interval union.
    """
    intervals = np.asarray(intervals, dtype=np.float64).reshape(-1, 2)
    M = intervals.shape[0]
    lows, ups = intervals[:, 0], intervals[:, 1]
    points = np.unique(intervals.ravel())
    pt_in = (lows[None, :] <= points[:, None]) & (points[:, None] <= ups[None, :])
    pt_votes = 2 * pt_in.sum(axis=1) > M
    gap_in = (lows[None, :] <= points[:-1, None]) & (points[1:, None] <= ups[None, :])
    gap_votes = 2 * gap_in.sum(axis=1) > M
    pieces = []
    current = None
    for j, p in enumerate(points):
        if pt_votes[j]:
            if current is None:
                current = [p, p]
            else:
                current[1] = p
        else:
            if current is not None:
                pieces.append(current)
                current = None
        if j < len(points) - 1 and not gap_votes[j] and current is not None:
            pieces.append(current)
            current = None
    if current is not None:
        pieces.append(current)
    return IntervalUnion.from_pieces(pieces)


class SplitConformal:
    """Symmetric residual-quantile intervals around a single model's predictions."""

    method_tag = "split_conformal"

    def __init__(self, spec=None, alpha=0.1, val_fraction=0.5):
        self.spec = spec or AlgorithmSpec("gradient_boosting")
        self.alpha = alpha
        self.val_fraction = val_fraction
        self.model = None
        self.q = None

    def fit(self, dataset: Dataset, seed: SeedSpec, indices=None):
        rows = np.arange(dataset.n) if indices is None else np.asarray(indices, dtype=np.int64)
        local = split_indices(rows.size, (1 - self.val_fraction, self.val_fraction),
                              seed.spawn("split"), parts=("train", "val"))
        tr, val = rows[local["train"]], rows[local["val"]]
        X, y = dataset.features, dataset.response
        self.model = learners.fit(self.spec, X[tr], y[tr], seed.spawn("fit"),
                                  task=REGRESSION)
        scores = np.abs(y[val] - self.model.predict(X[val]))
        self.q = quantile(scores, 1 - self.alpha)
        return self

    def predict_intervals(self, X) -> np.ndarray:
        preds = self.model.predict(np.asarray(X, dtype=np.float64))
        return np.column_stack([preds - self.q, preds + self.q])


class StudentizedConformal:
    """Split conformal with scores |y - f| / sigma(x); sigma fit on train residuals."""

    method_tag = "studentized_conformal"

    def __init__(self, spec=None, sigma_spec=None, alpha=0.1, val_fraction=0.5):
        self.spec = spec or AlgorithmSpec("random_forest")
        self.sigma_spec = sigma_spec or AlgorithmSpec("random_forest")
        self.alpha = alpha
        self.val_fraction = val_fraction
        self.model = None
        self.sigma_model = None
        self.q = None

    def fit(self, dataset: Dataset, seed: SeedSpec, indices=None):
        rows = np.arange(dataset.n) if indices is None else np.asarray(indices, dtype=np.int64)
        local = split_indices(rows.size, (1 - self.val_fraction, self.val_fraction),
                              seed.spawn("split"), parts=("train", "val"))
        tr, val = rows[local["train"]], rows[local["val"]]
        X, y = dataset.features, dataset.response
        self.model = learners.fit(self.spec, X[tr], y[tr], seed.spawn("fit"),
                                  task=REGRESSION)
        residuals = np.abs(y[tr] - self.model.predict(X[tr]))
        self.sigma_model = learners.fit(self.sigma_spec, X[tr], residuals,
                                        seed.spawn("fit-sigma"), task=REGRESSION)
        sigma = np.maximum(self.sigma_model.predict(X[val]), SIGMA_FLOOR)
        scores = np.abs(y[val] - self.model.predict(X[val])) / sigma
        self.q = quantile(scores, 1 - self.alpha)
        return self

    def predict_intervals(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        preds = self.model.predict(X)
        sigma = np.maximum(self.sigma_model.predict(X), SIGMA_FLOOR)
        return np.column_stack([preds - self.q * sigma, preds + self.q * sigma])


class MajorityVoteRegression:
    """Merge M split-conformal intervals run at level 1 - alpha/2 by strict majority."""

    method_tag = "majority_vote"

    def __init__(self, specs=None, alpha=0.1, val_fraction=0.5):
        self.specs = list(specs) if specs is not None else learners.default_specs(REGRESSION)
        self.alpha = alpha
        self.val_fraction = val_fraction
        self.components = []

    def fit(self, dataset: Dataset, seed: SeedSpec, indices=None):
        self.components = []
        for j, spec in enumerate(self.specs):
            comp = SplitConformal(spec, alpha=self.alpha / 2,
                                  val_fraction=self.val_fraction)
            # shared split: every component spawns the same split tag
            comp.fit(dataset, seed.spawn("component", j), indices)
            self.components.append(comp)
        return self

    def predict_unions(self, X):
        X = np.asarray(X, dtype=np.float64)
        per_comp = [c.predict_intervals(X) for c in self.components]
        out = []
        for i in range(X.shape[0]):
            ivs = np.array([p[i] for p in per_comp])
            out.append(majority_vote_union(ivs))
        return out


class PCSCh13Regressor:
    """Train-only bootstrap variant: bags from D_train bootstraps, gamma
    calibrated on held-out validation points using full (non-OOB) bags."""

    method_tag = "pcs_ch13"

    def __init__(self, specs=None, alpha=0.1, B=100, k=3, subset_selection=False,
                 val_fraction=0.2, jobs=1):
        self.specs = list(specs) if specs is not None else learners.default_specs(REGRESSION)
        self.alpha = alpha
        self.B = B
        self.k = k
        self.subset_selection = subset_selection
        self.val_fraction = val_fraction
        self.jobs = jobs
        self.screening = None
        self.ensemble = None
        self.subset = None
        self.gamma_hat = None

    def fit(self, dataset: Dataset, seed: SeedSpec, indices=None):
        if dataset.task != REGRESSION:
            raise ConfigError("PCSCh13Regressor requires a regression dataset")
        rows = np.arange(dataset.n) if indices is None else np.asarray(indices, dtype=np.int64)
        local = split_indices(rows.size, (1 - self.val_fraction, self.val_fraction),
                              seed.spawn("screen-split"), parts=("train", "val"))
        split = DataSplit(train_idx=rows[local["train"]], val_idx=rows[local["val"]])
        k = min(self.k, len(self.specs))
        self.screening = screen_models(self.specs, dataset, split, "mse", k,
                                       seed.spawn("screening"))
        selected = [self.specs[i] for i in self.screening.selected_indices]
        self.ensemble = fit_bootstrap_ensemble(selected, dataset, split.train_idx,
                                               self.B, seed.spawn("ensemble"),
                                               jobs=self.jobs)
        X_val = dataset.features[split.val_idx]
        y_val = dataset.response[split.val_idx]
        preds_by_spec = [np.empty((self.B, X_val.shape[0])) for _ in selected]
        for j in range(len(selected)):
            for b in range(self.B):
                preds_by_spec[j][b] = self.ensemble.models[j][b].predict(X_val)

        def calibrate(subset):
            stacked = np.concatenate([preds_by_spec[j] for j in subset], axis=0)
            lo, med, hi = _full_bag_triplets(stacked, self.alpha)
            scores = _min_gamma_vec(lo, med, hi, y_val)
            gamma = float(np.sort(scores)[rank_of(1 - self.alpha, scores.size) - 1])
            if np.isinf(gamma):
                raise CalibrationError("calibrated gamma is infinite")
            return subset, gamma * float(np.mean(hi - lo)), gamma

        if self.subset_selection and len(selected) > 1:
            candidates = []
            for s in _nonempty_subsets(len(selected)):
                try:
                    candidates.append(calibrate(s))
                except CalibrationError:
                    continue
            if not candidates:
                raise CalibrationError("every learner subset failed to calibrate")
            subset, _, gamma = _choose_by_width(candidates)
        else:
            subset, _, gamma = calibrate(tuple(range(len(selected))))
        self.subset = subset
        self.gamma_hat = gamma
        return self

    def predict_intervals(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        preds = np.empty((len(self.subset) * self.B, X.shape[0]))
        pos = 0
        for j in self.subset:
            for b in range(self.B):
                preds[pos] = self.ensemble.models[j][b].predict(X)
                pos += 1
        lo, med, hi = _full_bag_triplets(preds, self.alpha)
        g = self.gamma_hat
        return np.column_stack([med - g * (med - lo), med + g * (hi - med)])


# ---------------------------------------------------------------------------
# classification baselines


def _ranks_of_truth(probs: np.ndarray, y: np.ndarray) -> np.ndarray:
    """1-based rank of the true class in the descending-probability ordering."""
    order, _ = _ranking_and_cumsum(probs)
    return np.argmax(order == (np.asarray(y, dtype=np.int64) - 1)[:, None], axis=1) + 1


class TopK:
    """Fixed-size prediction sets: the calibrated quantile of true-class ranks."""

    method_tag = "topk"

    def __init__(self, spec=None, alpha=0.1, val_fraction=0.5):
        self.spec = spec or AlgorithmSpec("random_forest")
        self.alpha = alpha
        self.val_fraction = val_fraction
        self.model = None
        self.q = None

    def fit(self, dataset: Dataset, seed: SeedSpec, indices=None):
        rows = np.arange(dataset.n) if indices is None else np.asarray(indices, dtype=np.int64)
        local = split_indices(rows.size, (1 - self.val_fraction, self.val_fraction),
                              seed.spawn("split"), parts=("train", "val"))
        tr, val = rows[local["train"]], rows[local["val"]]
        X, y = dataset.features, dataset.response
        self.model = learners.fit(self.spec, X[tr], y[tr], seed.spawn("fit"),
                                  task=CLASSIFICATION, n_classes=dataset.num_classes)
        ranks = _ranks_of_truth(self.model.predict_proba_matrix(X[val]), y[val])
        self.q = int(quantile(ranks, 1 - self.alpha))
        return self

    def predict_sets(self, X):
        probs = self.model.predict_proba_matrix(np.asarray(X, dtype=np.float64))
        order, _ = _ranking_and_cumsum(probs)
        return [order[i, :self.q] + 1 for i in range(probs.shape[0])]


class APS:
    """Adaptive prediction sets on a single model's probabilities."""

    method_tag = "aps"

    def __init__(self, spec=None, alpha=0.1, val_fraction=0.5):
        self.spec = spec or AlgorithmSpec("random_forest")
        self.alpha = alpha
        self.val_fraction = val_fraction
        self.model = None
        self.q = None

    def fit(self, dataset: Dataset, seed: SeedSpec, indices=None):
        rows = np.arange(dataset.n) if indices is None else np.asarray(indices, dtype=np.int64)
        local = split_indices(rows.size, (1 - self.val_fraction, self.val_fraction),
                              seed.spawn("split"), parts=("train", "val"))
        tr, val = rows[local["train"]], rows[local["val"]]
        X, y = dataset.features, dataset.response
        self.model = learners.fit(self.spec, X[tr], y[tr], seed.spawn("fit"),
                                  task=CLASSIFICATION, n_classes=dataset.num_classes)
        scores = aps_scores(self.model.predict_proba_matrix(X[val]), y[val])
        self.q = quantile(scores, 1 - self.alpha)
        return self

    def predict_sets(self, X):
        probs = self.model.predict_proba_matrix(np.asarray(X, dtype=np.float64))
        return prediction_sets_from_probs(probs, self.q)


DEFAULT_LAMBDA_GRID = (0.001, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0)


def raps_scores(probs: np.ndarray, y: np.ndarray, lam: float, t_reg: int) -> np.ndarray:
    order, csum = _ranking_and_cumsum(probs)
    pos = np.argmax(order == (np.asarray(y, dtype=np.int64) - 1)[:, None], axis=1)
    penalty = lam * np.maximum(0, (pos + 1) - t_reg)
    return csum[np.arange(probs.shape[0]), pos] + penalty


def raps_sets(probs: np.ndarray, q: float, lam: float, t_reg: int):
    order, csum = _ranking_and_cumsum(probs)
    t = np.arange(1, probs.shape[1] + 1)
    g = csum + lam * np.maximum(0, t - t_reg)[None, :]
    reached = g >= q
    first = np.argmax(reached, axis=1)
    r = np.where(reached.any(axis=1), first, probs.shape[1] - 1)
    return [order[i, :r[i] + 1] + 1 for i in range(probs.shape[0])]


class RAPS:
    """Rank-regularized APS; t_reg and lambda tuned on a held-out tuning set."""

    method_tag = "raps"

    def __init__(self, spec=None, alpha=0.1, fractions=(0.5, 0.25, 0.25),
                 lambda_grid=DEFAULT_LAMBDA_GRID, lam=None, t_reg=None):
        self.spec = spec or AlgorithmSpec("random_forest")
        self.alpha = alpha
        self.fractions = tuple(fractions)
        self.lambda_grid = tuple(lambda_grid)
        self.lam = lam
        self.t_reg = t_reg
        self.model = None
        self.q = None

    def fit(self, dataset: Dataset, seed: SeedSpec, indices=None):
        rows = np.arange(dataset.n) if indices is None else np.asarray(indices, dtype=np.int64)
        local = split_indices(rows.size, self.fractions, seed.spawn("split"),
                              parts=("train", "tune", "val"))
        tr, tune, val = rows[local["train"]], rows[local["tune"]], rows[local["val"]]
        X, y = dataset.features, dataset.response
        self.model = learners.fit(self.spec, X[tr], y[tr], seed.spawn("fit"),
                                  task=CLASSIFICATION, n_classes=dataset.num_classes)
        probs_tune = self.model.predict_proba_matrix(X[tune])
        if self.t_reg is None:
            ranks = _ranks_of_truth(probs_tune, y[tune])
            self.t_reg = int(quantile(ranks, 1 - self.alpha))
        if self.lam is None:
            best = None
            for lam in self.lambda_grid:
                s = raps_scores(probs_tune, y[tune], lam, self.t_reg)
                q_tune = quantile(s, 1 - self.alpha)
                sets = raps_sets(probs_tune, q_tune, lam, self.t_reg)
                size = float(np.mean([len(x) for x in sets]))
                if best is None or size < best[0]:
                    best = (size, lam)
            if best is None:
                raise CalibrationError("RAPS lambda grid search failed")
            self.lam = best[1]
        scores = raps_scores(self.model.predict_proba_matrix(X[val]), y[val],
                             self.lam, self.t_reg)
        self.q = quantile(scores, 1 - self.alpha)
        return self

    def predict_sets(self, X):
        probs = self.model.predict_proba_matrix(np.asarray(X, dtype=np.float64))
        return raps_sets(probs, self.q, self.lam, self.t_reg)


class MajorityVoteClassification:
    """Classes contained in strictly more than half of M APS sets at level 1 - alpha/2."""

    method_tag = "majority_vote"

    def __init__(self, specs=None, alpha=0.1, val_fraction=0.5):
        self.specs = list(specs) if specs is not None else learners.default_specs(CLASSIFICATION)
        self.alpha = alpha
        self.val_fraction = val_fraction
        self.components = []
        self.n_empty_sets = 0

    def fit(self, dataset: Dataset, seed: SeedSpec, indices=None):
        self.components = []
        for j, spec in enumerate(self.specs):
            comp = APS(spec, alpha=self.alpha / 2, val_fraction=self.val_fraction)
            comp.fit(dataset, seed.spawn("component", j), indices)
            self.components.append(comp)
        return self

    def predict_sets(self, X):
        X = np.asarray(X, dtype=np.float64)
        per_comp = [c.predict_sets(X) for c in self.components]
        M = len(self.components)
        C = self.components[0].model.impl.n_classes
        out = []
        self.n_empty_sets = 0
        for i in range(X.shape[0]):
            counts = np.zeros(C, dtype=np.int64)
            for sets in per_comp:
                counts[np.asarray(sets[i]) - 1] += 1
            chosen = np.flatnonzero(2 * counts > M) + 1
            if chosen.size == 0:
                self.n_empty_sets += 1
            out.append(chosen)
        return out
