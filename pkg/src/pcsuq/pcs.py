"""PCS uncertainty quantification.

Pipeline: screen learners by validation loss, refit the survivors across B
bootstraps, form out-of-bag prediction bags per sample, then calibrate a
multiplicative factor gamma that scales the median-anchored arms of the raw
quantile interval until the target coverage holds on the calibration points.
Classification replaces intervals with adaptive prediction sets built from
ensemble-mean probabilities. A modified split-style variant calibrates on a
held-out set and carries a finite-sample coverage guarantee.
"""

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import learners
from .core import (CLASSIFICATION, REGRESSION, BootstrapPlan, Dataset,
                   DataSplit, SeedSpec, make_bootstrap_plan, quantile,
                   quantile_sorted, rank_of, split_indices)
from .exceptions import CalibrationError, ConfigError, DataError, FitError
from .learners import AlgorithmSpec, FittedModel, ProbabilityVector


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise DataError(f"interval bounds out of order: [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, y: float) -> bool:
        return self.lower <= y <= self.upper


@dataclass(frozen=True)
class ScreeningReport:
    """Validation losses per candidate with the selected top-k."""

    labels: tuple
    losses: tuple            # float or None per candidate (None = failed fit)
    errors: tuple            # failure message or None per candidate
    ranked: tuple            # candidate indices sorted by (loss, declaration order)
    selected_indices: tuple  # first k of ranked
    k: int


@dataclass(frozen=True)
class BootstrapEnsemble:
    """k specs x B bootstraps of fitted models over a fixed row set."""

    specs: tuple
    plan: BootstrapPlan
    models: tuple            # models[j][b]
    task: str
    n_classes: int
    indices: np.ndarray      # dataset rows the plan resamples refer to


@dataclass(frozen=True)
class PredictionBag:
    """Multiset of ensemble predictions at one point."""

    values: np.ndarray
    source: str  # "oob" or "full"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.size == 0:
            raise DataError("prediction bag must be nonempty")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class GammaCalibration:
    gamma_hat: float
    alpha: float
    anchor: str
    per_sample_scores: np.ndarray
    n_excluded: int = 0


@dataclass(frozen=True)
class ClassCalibration:
    threshold: float
    alpha: float
    score_tag: str = "aps-ensemble-mean"
    per_sample_scores: np.ndarray = field(default_factory=lambda: np.empty(0))
    n_excluded: int = 0


# ---------------------------------------------------------------------------
# screening


def screen_models(specs, dataset: Dataset, split: DataSplit, loss_kind: str,
                  k: int, seed: SeedSpec) -> ScreeningReport:
    """Fit every candidate on train rows, rank by validation loss, keep the k best.

    Failed fits are recorded and excluded from the ranking, never silently
    ranked. Ties break by declaration order.
    """
    if not (1 <= k <= len(specs)):
        raise ConfigError(f"k must lie in 1..{len(specs)}, got {k}")
    if split.val_idx.size == 0:
        raise ConfigError("screening requires a nonempty validation part")
    X, y = dataset.features, dataset.response
    losses, errors = [], []
    for idx, spec in enumerate(specs):
        try:
            model = learners.fit(spec, X[split.train_idx], y[split.train_idx],
                                 seed.spawn("screen-fit", idx), task=dataset.task,
                                 n_classes=dataset.num_classes)
            if dataset.task == REGRESSION:
                preds = model.predict(X[split.val_idx])
            else:
                preds = model.predict_proba_matrix(X[split.val_idx])
            losses.append(learners.loss(preds, y[split.val_idx], loss_kind))
            errors.append(None)
        except (FitError, DataError) as exc:
            losses.append(None)
            errors.append(str(exc))
    ok = [i for i in range(len(specs)) if losses[i] is not None]
    if not ok:
        raise FitError("every candidate learner failed to fit during screening")
    ranked = tuple(sorted(ok, key=lambda i: (losses[i], i)))
    selected = ranked[:min(k, len(ranked))]
    return ScreeningReport(
        labels=tuple(s.label for s in specs),
        losses=tuple(losses), errors=tuple(errors),
        ranked=ranked, selected_indices=selected, k=k,
    )


# ---------------------------------------------------------------------------
# bootstrap ensembles


def _fit_one(spec, X, y, seed: SeedSpec, task, n_classes, j, b):
    try:
        return learners.fit(spec, X, y, seed.spawn("model", 0), task=task,
                            n_classes=n_classes)
    except (FitError, DataError):
        try:
            return learners.fit(spec, X, y, seed.spawn("model-retry", 0), task=task,
                                n_classes=n_classes)
        except (FitError, DataError) as exc:
            raise FitError(
                f"model ({spec.label}, bootstrap {b}) failed twice: {exc}"
            ) from exc


def fit_bootstrap_ensemble(specs, dataset: Dataset, indices, B: int,
                           seed: SeedSpec, jobs: int = 1) -> BootstrapEnsemble:
    """Fit |specs| x B models, one per (spec, bootstrap resample) pair.

    Per-model seeds derive from (seed, j, b), so fits may run concurrently
    without affecting results; a failed fit is retried once with a fresh
    derived seed before erroring.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if B < 1:
        raise ConfigError(f"B must be >= 1, got {B}")
    if indices.size < 2:
        raise ConfigError("bootstrap ensemble needs at least 2 participating rows")
    plan = make_bootstrap_plan(indices.size, B, seed.spawn("plan"))
    X, y = dataset.features, dataset.response
    tasks = []
    for j, spec in enumerate(specs):
        for b in range(B):
            rows = indices[plan.resamples[b]]
            tasks.append((spec, X[rows], y[rows],
                          seed.spawn("ensemble-model", j * B + b),
                          dataset.task, dataset.num_classes, j, b))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            fitted = list(pool.map(lambda a: _fit_one(*a), tasks))
    else:
        fitted = [_fit_one(*a) for a in tasks]
    models = tuple(tuple(fitted[j * B + b] for b in range(B)) for j in range(len(specs)))
    return BootstrapEnsemble(specs=tuple(specs), plan=plan, models=models,
                             task=dataset.task, n_classes=dataset.num_classes or 0,
                             indices=indices)


def ensemble_predictions(ensemble: BootstrapEnsemble, X) -> np.ndarray:
    """(k, B, m) regression predictions at the m rows of X."""
    k, B = len(ensemble.specs), ensemble.plan.B
    m = np.asarray(X).shape[0]
    out = np.empty((k, B, m))
    for j in range(k):
        for b in range(B):
            out[j, b] = ensemble.models[j][b].predict(X)
    return out


def ensemble_probas(ensemble: BootstrapEnsemble, X) -> np.ndarray:
    """(k, B, m, C) class probabilities at the m rows of X."""
    k, B = len(ensemble.specs), ensemble.plan.B
    m = np.asarray(X).shape[0]
    out = np.empty((k, B, m, ensemble.n_classes))
    for j in range(k):
        for b in range(B):
            out[j, b] = ensemble.models[j][b].predict_proba_matrix(X)
    return out


def oob_bag(ensemble: BootstrapEnsemble, i: int, x_i) -> PredictionBag | None:
    """Bag of predictions at x_i from models whose resample excludes sample i.

    Returns None when sample i is in-bag everywhere (the caller excludes it
    from calibration and counts the exclusion).
    """
    T = ensemble.plan.oob(i)
    if T.size == 0:
        return None
    x = np.asarray(x_i, dtype=np.float64).reshape(1, -1)
    vals = np.empty(len(ensemble.specs) * T.size)
    pos = 0
    for j in range(len(ensemble.specs)):
        for b in T:
            vals[pos] = ensemble.models[j][b].predict(x)[0]
            pos += 1
    return PredictionBag(values=vals, source="oob")


# ---------------------------------------------------------------------------
# intervals and gamma calibration


def _bag_values(bag) -> np.ndarray:
    return bag.values if isinstance(bag, PredictionBag) else np.asarray(bag, dtype=np.float64)


def raw_interval(bag, alpha: float) -> Interval:
    """Uncalibrated [q_{a/2}, q_{1-a/2}] interval of the bag."""
    s = np.sort(_bag_values(bag))
    return Interval(quantile_sorted(s, alpha / 2), quantile_sorted(s, 1 - alpha / 2))


def scale_interval(bag, alpha: float, gamma: float) -> Interval:
    """Median-anchored interval with both arms scaled by gamma."""
    if gamma < 0:
        raise ConfigError(f"gamma must be >= 0, got {gamma}")
    s = np.sort(_bag_values(bag))
    lo = quantile_sorted(s, alpha / 2)
    med = quantile_sorted(s, 0.5)
    hi = quantile_sorted(s, 1 - alpha / 2)
    return Interval(med - gamma * (med - lo), med + gamma * (hi - med))


def min_gamma_median(bag, alpha: float, y: float) -> float:
    """Smallest gamma >= 0 with y inside the scaled interval; inf if unreachable."""
    s = np.sort(_bag_values(bag))
    lo = quantile_sorted(s, alpha / 2)
    med = quantile_sorted(s, 0.5)
    hi = quantile_sorted(s, 1 - alpha / 2)
    if y == med:
        return 0.0
    if y > med:
        arm = hi - med
        return (y - med) / arm if arm > 0 else np.inf
    arm = med - lo
    return (med - y) / arm if arm > 0 else np.inf


def _min_gamma_vec(lo, med, hi, y) -> np.ndarray:
    """Vectorized min_gamma_median over per-sample bag quantile triplets."""
    scores = np.zeros(y.shape[0])
    above = y > med
    below = y < med
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(hi > med, (y - med) / (hi - med), np.inf)
        dn = np.where(med > lo, (med - y) / (med - lo), np.inf)
    scores[above] = up[above]
    scores[below] = dn[below]
    return scores


def calibrate_gamma(bags, responses, alpha: float) -> GammaCalibration:
    """gamma_hat = the ceil((1-alpha)*n)-th smallest per-sample minimal gamma.

    Bags passed as None (empty OOB sets) are excluded and counted. Infinite
    gamma_hat means more than an alpha fraction of points cannot be covered.
    """
    responses = np.asarray(responses, dtype=np.float64)
    usable, ys = [], []
    n_excluded = 0
    for bag, y in zip(bags, responses):
        if bag is None:
            n_excluded += 1
            continue
        usable.append(bag)
        ys.append(y)
    if not usable:
        raise CalibrationError("no usable calibration bags (all samples were in-bag)")
    scores = np.array([min_gamma_median(b, alpha, y) for b, y in zip(usable, ys)])
    gamma_hat = float(np.sort(scores)[rank_of(1 - alpha, scores.size) - 1])
    if np.isinf(gamma_hat):
        raise CalibrationError(
            "calibrated gamma is infinite: too many degenerate bags; "
            "increase B or use different learners"
        )
    return GammaCalibration(gamma_hat=gamma_hat, alpha=alpha, anchor="median",
                            per_sample_scores=scores, n_excluded=n_excluded)


def calibrate_additive(bags, responses, alpha: float):
    """Fixed-offset widening calibrated the same way; the ablation baseline.

    Returns (offset, per_sample_scores, n_excluded).
    """
    responses = np.asarray(responses, dtype=np.float64)
    scores = []
    n_excluded = 0
    for bag, y in zip(bags, responses):
        if bag is None:
            n_excluded += 1
            continue
        iv = raw_interval(bag, alpha)
        scores.append(max(0.0, iv.lower - y, y - iv.upper))
    if not scores:
        raise CalibrationError("no usable calibration bags (all samples were in-bag)")
    scores = np.asarray(scores)
    offset = float(np.sort(scores)[rank_of(1 - alpha, scores.size) - 1])
    return offset, scores, n_excluded


# ---------------------------------------------------------------------------
# classification scores and sets


def _ranking_and_cumsum(probs: np.ndarray):
    order = np.argsort(-probs, axis=1, kind="stable")
    sorted_p = np.take_along_axis(probs, order, axis=1)
    return order, np.cumsum(sorted_p, axis=1)


def aps_scores(probs: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Cumulative sorted-probability mass down to and including the true class."""
    order, csum = _ranking_and_cumsum(probs)
    pos = np.argmax(order == (np.asarray(y, dtype=np.int64) - 1)[:, None], axis=1)
    return csum[np.arange(probs.shape[0]), pos]


def aps_score(p, y: int) -> float:
    probs = p.probs if isinstance(p, ProbabilityVector) else np.asarray(p, dtype=np.float64)
    return float(aps_scores(probs[None, :], np.array([y]))[0])


def prediction_sets_from_probs(probs: np.ndarray, q: float):
    """Smallest prefix of each row's ranking whose cumulative mass reaches q.

    Never empty; falls back to all C classes when the mass never reaches q.
    """
    order, csum = _ranking_and_cumsum(probs)
    reached = csum >= q
    first = np.argmax(reached, axis=1)
    r = np.where(reached.any(axis=1), first, probs.shape[1] - 1)
    return [order[i, :r[i] + 1] + 1 for i in range(probs.shape[0])]


def ensemble_mean_proba(ensemble: BootstrapEnsemble, x, oob_index: int | None = None) -> ProbabilityVector:
    """Mean class probabilities across the ensemble at one point.

    With oob_index set, only bootstraps excluding that sample contribute
    (calibration); otherwise all k*B models do (test points).
    """
    if ensemble.task != CLASSIFICATION:
        raise DataError("ensemble_mean_proba requires a classification ensemble")
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if oob_index is None:
        bs = np.arange(ensemble.plan.B)
    else:
        bs = ensemble.plan.oob(oob_index)
        if bs.size == 0:
            raise DataError(f"sample {oob_index} has no out-of-bag bootstraps")
    acc = np.zeros(ensemble.n_classes)
    for j in range(len(ensemble.specs)):
        for b in bs:
            acc += ensemble.models[j][b].predict_proba_matrix(x)[0]
    return ProbabilityVector(acc / (len(ensemble.specs) * bs.size))


# ---------------------------------------------------------------------------
# subset search shared by the regression / classification drivers


def _nonempty_subsets(k: int):
    items = range(k)
    for size in range(1, k + 1):
        yield from itertools.combinations(items, size)


def _choose_by_width(candidates):
    """candidates: list of (subset_tuple, mean_width, payload). Ties within
    1e-12 of the minimum go to fewer models, then better screening rank."""
    best_width = min(w for _, w, _ in candidates)
    eligible = [c for c in candidates if c[1] <= best_width + 1e-12]
    eligible.sort(key=lambda c: (len(c[0]), c[0]))
    return eligible[0]


def _oob_triplets(preds_by_spec, subset, oob_mask, alpha):
    """Per-sample (lo, med, hi) of OOB bags for the given spec subset.

    preds_by_spec: list of (B, n) arrays. Samples with empty OOB sets get NaN
    rows. Returns (lo, med, hi, usable_mask).
    """
    n = oob_mask.shape[0]
    lo = np.full(n, np.nan)
    med = np.full(n, np.nan)
    hi = np.full(n, np.nan)
    usable = np.zeros(n, dtype=bool)
    for i in range(n):
        T = np.flatnonzero(oob_mask[i])
        if T.size == 0:
            continue
        bag = np.concatenate([preds_by_spec[j][T, i] for j in subset])
        bag.sort()
        lo[i] = quantile_sorted(bag, alpha / 2)
        med[i] = quantile_sorted(bag, 0.5)
        hi[i] = quantile_sorted(bag, 1 - alpha / 2)
        usable[i] = True
    return lo, med, hi, usable


def _full_bag_triplets(preds: np.ndarray, alpha: float):
    """(lo, med, hi) per column of an (M, m) prediction matrix."""
    s = np.sort(preds, axis=0)
    M = s.shape[0]
    return (s[rank_of(alpha / 2, M) - 1],
            s[rank_of(0.5, M) - 1],
            s[rank_of(1 - alpha / 2, M) - 1])


# ---------------------------------------------------------------------------
# drivers


class PCSRegressor:
    """PCS prediction intervals for regression.

    Candidate learners are screened on a validation split, the top-k refit on
    B bootstraps of all the data handed to fit(), and a multiplicative factor
    calibrated on out-of-bag bags. With subset_selection on, every nonempty
    subset of the screened learners is calibrated and the one with the
    smallest mean calibrated width wins.
    """

    method_tag = "pcs"

    def __init__(self, specs=None, alpha=0.1, B=100, k=3, subset_selection=True,
                 val_fraction=0.2, calibration="multiplicative", jobs=1):
        if not (0.0 < alpha < 1.0):
            raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
        if calibration not in ("multiplicative", "additive"):
            raise ConfigError(f"unknown calibration mode {calibration!r}")
        self.specs = list(specs) if specs is not None else learners.default_specs(REGRESSION)
        self.alpha = alpha
        self.B = B
        self.k = k
        self.subset_selection = subset_selection
        self.val_fraction = val_fraction
        self.calibration = calibration
        self.jobs = jobs
        self.screening = None
        self.ensemble = None
        self.subset = None
        self.gamma = None          # GammaCalibration (multiplicative mode)
        self.offset = None         # float (additive mode)
        self.warnings = {}

    # -- fitting ----------------------------------------------------------

    def fit(self, dataset: Dataset, seed: SeedSpec, indices=None):
        if dataset.task != REGRESSION:
            raise ConfigError("PCSRegressor requires a regression dataset")
        rows = np.arange(dataset.n) if indices is None else np.asarray(indices, dtype=np.int64)
        local = split_indices(rows.size, (1 - self.val_fraction, self.val_fraction),
                              seed.spawn("screen-split"), parts=("train", "val"))
        split = DataSplit(train_idx=rows[local["train"]], val_idx=rows[local["val"]])
        k = min(self.k, len(self.specs))
        self.screening = screen_models(self.specs, dataset, split, "mse", k,
                                       seed.spawn("screening"))
        selected = [self.specs[i] for i in self.screening.selected_indices]
        self.ensemble = fit_bootstrap_ensemble(selected, dataset, rows, self.B,
                                               seed.spawn("ensemble"), jobs=self.jobs)
        X_cal = dataset.features[rows]
        y_cal = dataset.response[rows]
        preds_by_spec = [np.empty((self.B, rows.size)) for _ in selected]
        for j in range(len(selected)):
            for b in range(self.B):
                preds_by_spec[j][b] = self.ensemble.models[j][b].predict(X_cal)

        if self.subset_selection and len(selected) > 1:
            candidates = []
            for subset in _nonempty_subsets(len(selected)):
                try:
                    cand = self._calibrate_subset(preds_by_spec, subset, y_cal)
                except CalibrationError:
                    continue
                candidates.append(cand)
            if not candidates:
                raise CalibrationError("every learner subset failed to calibrate")
            subset, _, payload = _choose_by_width(candidates)
        else:
            subset, _, payload = self._calibrate_subset(
                preds_by_spec, tuple(range(len(selected))), y_cal)
        self.subset = subset
        if self.calibration == "multiplicative":
            self.gamma = payload
            self.warnings["empty_oob_excluded"] = payload.n_excluded
        else:
            self.offset, n_excluded = payload
            self.warnings["empty_oob_excluded"] = n_excluded
        return self

    def _calibrate_subset(self, preds_by_spec, subset, y_cal):
        lo, med, hi, usable = _oob_triplets(preds_by_spec, subset,
                                            self.ensemble.plan.oob_mask, self.alpha)
        if not usable.any():
            raise CalibrationError("no usable calibration bags")
        n_excluded = int((~usable).sum())
        yu = y_cal[usable]
        lou, medu, hiu = lo[usable], med[usable], hi[usable]
        if self.calibration == "multiplicative":
            scores = _min_gamma_vec(lou, medu, hiu, yu)
            gamma_hat = float(np.sort(scores)[rank_of(1 - self.alpha, scores.size) - 1])
            if np.isinf(gamma_hat):
                raise CalibrationError(
                    "calibrated gamma is infinite; increase B or use different learners"
                )
            calib = GammaCalibration(gamma_hat=gamma_hat, alpha=self.alpha,
                                     anchor="median", per_sample_scores=scores,
                                     n_excluded=n_excluded)
            mean_width = gamma_hat * float(np.mean(hiu - lou))
            return subset, mean_width, calib
        scores = np.maximum(0.0, np.maximum(lou - yu, yu - hiu))
        offset = float(np.sort(scores)[rank_of(1 - self.alpha, scores.size) - 1])
        mean_width = float(np.mean(hiu - lou)) + 2 * offset
        return subset, mean_width, (offset, n_excluded)

    # -- prediction -------------------------------------------------------

    def _subset_predictions(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        preds = np.empty((len(self.subset) * self.B, X.shape[0]))
        pos = 0
        for j in self.subset:
            for b in range(self.B):
                preds[pos] = self.ensemble.models[j][b].predict(X)
                pos += 1
        return preds

    def predict_intervals(self, X) -> np.ndarray:
        """(m, 2) array of calibrated interval bounds."""
        if self.subset is None:
            raise ConfigError("fit() must be called before predict_intervals()")
        lo, med, hi = _full_bag_triplets(self._subset_predictions(X), self.alpha)
        if self.calibration == "multiplicative":
            g = self.gamma.gamma_hat
            return np.column_stack([med - g * (med - lo), med + g * (hi - med)])
        return np.column_stack([lo - self.offset, hi + self.offset])


class PCSClassifier:
    """PCS prediction sets for multi-class classification.

    Calibration scores are APS scores of out-of-bag ensemble-mean
    probabilities; test-time sets use the full-ensemble mean, mirroring the
    regression OOB/full asymmetry. Subset selection minimizes mean calibrated
    set size on the calibration points.
    """

    method_tag = "pcs"

    def __init__(self, specs=None, alpha=0.1, B=100, k=3, subset_selection=True,
                 val_fraction=0.2, jobs=1):
        if not (0.0 < alpha < 1.0):
            raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
        self.specs = list(specs) if specs is not None else learners.default_specs(CLASSIFICATION)
        self.alpha = alpha
        self.B = B
        self.k = k
        self.subset_selection = subset_selection
        self.val_fraction = val_fraction
        self.jobs = jobs
        self.screening = None
        self.ensemble = None
        self.subset = None
        self.calib = None
        self.warnings = {}

    def fit(self, dataset: Dataset, seed: SeedSpec, indices=None):
        if dataset.task != CLASSIFICATION:
            raise ConfigError("PCSClassifier requires a classification dataset")
        rows = np.arange(dataset.n) if indices is None else np.asarray(indices, dtype=np.int64)
        local = split_indices(rows.size, (1 - self.val_fraction, self.val_fraction),
                              seed.spawn("screen-split"), parts=("train", "val"))
        split = DataSplit(train_idx=rows[local["train"]], val_idx=rows[local["val"]])
        k = min(self.k, len(self.specs))
        self.screening = screen_models(self.specs, dataset, split, "neg_accuracy", k,
                                       seed.spawn("screening"))
        selected = [self.specs[i] for i in self.screening.selected_indices]
        self.ensemble = fit_bootstrap_ensemble(selected, dataset, rows, self.B,
                                               seed.spawn("ensemble"), jobs=self.jobs)
        X_cal = dataset.features[rows]
        y_cal = dataset.response[rows]
        C = dataset.num_classes
        probas = [np.empty((self.B, rows.size, C)) for _ in selected]
        for j in range(len(selected)):
            for b in range(self.B):
                probas[j][b] = self.ensemble.models[j][b].predict_proba_matrix(X_cal)

        oob_mask = self.ensemble.plan.oob_mask
        usable = oob_mask.any(axis=1)
        self.warnings["empty_oob_excluded"] = int((~usable).sum())
        if not usable.any():
            raise CalibrationError("no usable calibration samples")

        def calibrate(subset):
            acc = np.zeros((rows.size, C))
            for j in subset:
                acc += np.einsum("bnc,nb->nc", probas[j], oob_mask.astype(np.float64))
            denom = len(subset) * oob_mask.sum(axis=1)
            mean_probs = acc[usable] / denom[usable, None]
            scores = aps_scores(mean_probs, y_cal[usable])
            q = float(np.sort(scores)[rank_of(1 - self.alpha, scores.size) - 1])
            sets = prediction_sets_from_probs(mean_probs, q)
            mean_size = float(np.mean([len(s) for s in sets]))
            return subset, mean_size, (q, scores)

        if self.subset_selection and len(selected) > 1:
            candidates = [calibrate(s) for s in _nonempty_subsets(len(selected))]
            subset, _, payload = _choose_by_width(candidates)
        else:
            subset, _, payload = calibrate(tuple(range(len(selected))))
        self.subset = subset
        q, scores = payload
        self.calib = ClassCalibration(threshold=q, alpha=self.alpha,
                                      per_sample_scores=scores,
                                      n_excluded=self.warnings["empty_oob_excluded"])
        return self

    def _mean_probs(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        acc = np.zeros((X.shape[0], self.ensemble.n_classes))
        for j in self.subset:
            for b in range(self.B):
                acc += self.ensemble.models[j][b].predict_proba_matrix(X)
        return acc / (len(self.subset) * self.B)

    def predict_sets(self, X):
        """List of 1-based class-index arrays, one per row of X."""
        if self.subset is None:
            raise ConfigError("fit() must be called before predict_sets()")
        return prediction_sets_from_probs(self._mean_probs(X), self.calib.threshold)


class ModifiedPCSRegressor:
    """Split-style PCS with a finite-sample coverage guarantee.

    Three-way split: screening on the validation part, bootstraps drawn from
    the training part only, and the calibration part used solely to learn the
    scaling factor. The per-point score is |y - c| / (R/2) for the midpoint c
    and range R of the uncalibrated interval, and gamma_hat is the
    ceil((1-alpha)(m+1))-th smallest calibration score.
    """

    method_tag = "modified_pcs"

    def __init__(self, specs=None, alpha=0.1, B=100, k=3,
                 fractions=(0.5, 0.25, 0.25), jobs=1):
        if not (0.0 < alpha < 1.0):
            raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
        self.specs = list(specs) if specs is not None else learners.default_specs(REGRESSION)
        self.alpha = alpha
        self.B = B
        self.k = k
        self.fractions = tuple(fractions)
        self.jobs = jobs
        self.screening = None
        self.ensemble = None
        self.gamma_hat = None
        self.per_sample_scores = None
        self.warnings = {}

    def fit(self, dataset: Dataset, seed: SeedSpec, indices=None):
        if dataset.task != REGRESSION:
            raise ConfigError("ModifiedPCSRegressor requires a regression dataset")
        rows = np.arange(dataset.n) if indices is None else np.asarray(indices, dtype=np.int64)
        local = split_indices(rows.size, self.fractions, seed.spawn("three-way-split"),
                              parts=("train", "val", "cal"))
        split = DataSplit(train_idx=rows[local["train"]], val_idx=rows[local["val"]],
                          cal_idx=rows[local["cal"]])
        k = min(self.k, len(self.specs))
        self.screening = screen_models(self.specs, dataset, split, "mse", k,
                                       seed.spawn("screening"))
        selected = [self.specs[i] for i in self.screening.selected_indices]
        self.ensemble = fit_bootstrap_ensemble(selected, dataset, split.train_idx,
                                               self.B, seed.spawn("ensemble"),
                                               jobs=self.jobs)
        X_cal = dataset.features[split.cal_idx]
        y_cal = dataset.response[split.cal_idx]
        c, half = self._center_halfrange(X_cal)
        scores = self.score(y_cal, c, half)
        m = scores.size
        rank = rank_of(1 - self.alpha, m + 1)
        if rank > m:
            raise CalibrationError(
                f"calibration set too small: need rank {rank} of {m} scores; "
                "enlarge the calibration fraction or lower the target coverage"
            )
        gamma_hat = float(np.sort(scores)[rank - 1])
        if np.isinf(gamma_hat):
            raise CalibrationError(
                "calibrated gamma is infinite; increase B or use different learners"
            )
        self.gamma_hat = gamma_hat
        self.per_sample_scores = scores
        return self

    @staticmethod
    def score(y, center, half_range):
        """min{gamma: y inside center +/- gamma*half_range}, with inf sentinel."""
        y = np.asarray(y, dtype=np.float64)
        dev = np.abs(y - center)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(half_range > 0, dev / half_range,
                         np.where(dev == 0, 0.0, np.inf))
        return s

    def _center_halfrange(self, X):
        preds = np.empty((len(self.ensemble.specs) * self.B, np.asarray(X).shape[0]))
        pos = 0
        for j in range(len(self.ensemble.specs)):
            for b in range(self.B):
                preds[pos] = self.ensemble.models[j][b].predict(X)
                pos += 1
        s = np.sort(preds, axis=0)
        M = s.shape[0]
        lo = s[rank_of(self.alpha / 2, M) - 1]
        hi = s[rank_of(1 - self.alpha / 2, M) - 1]
        return (lo + hi) / 2, (hi - lo) / 2

    def predict_intervals(self, X) -> np.ndarray:
        if self.gamma_hat is None:
            raise ConfigError("fit() must be called before predict_intervals()")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        c, half = self._center_halfrange(X)
        g = self.gamma_hat
        return np.column_stack([c - g * half, c + g * half])


# ---------------------------------------------------------------------------
# external-prediction entry point


def calibrate_gamma_from_predictions(preds: np.ndarray, oob_mask: np.ndarray,
                                     responses, alpha: float) -> GammaCalibration:
    """Gamma calibration over a (k, B, n) prediction tensor from external learners."""
    k, B, n = preds.shape
    if oob_mask.shape != (n, B):
        raise DataError(f"oob_mask must have shape ({n}, {B}), got {oob_mask.shape}")
    bags = []
    for i in range(n):
        T = np.flatnonzero(oob_mask[i])
        if T.size == 0:
            bags.append(None)
        else:
            bags.append(PredictionBag(preds[:, T, i].ravel(), source="oob"))
    return calibrate_gamma(bags, responses, alpha)
