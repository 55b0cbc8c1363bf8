"""Core data model: seeding, datasets, splits, bootstrap plans, and quantiles.

Everything here is immutable after construction and safe to share across
workers. All randomness in the package flows through :class:`SeedSpec`, which
derives child seeds by hashing (master, tag, index) so results never depend on
execution order or degree of parallelism.
"""

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DataError

REGRESSION = "regression"
CLASSIFICATION = "classification"

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class SeedSpec:
    """Deterministic seed derivation from a single 64-bit master seed.

    Child seeds are the first 8 bytes of blake2b over ``"master|tag|index"``.
    Identical (master, tag, index) always yields the identical child seed.
    """

    master_seed: int

    def child(self, tag: str, index: int = 0) -> int:
        payload = f"{self.master_seed}|{tag}|{index}".encode()
        digest = hashlib.blake2b(payload, digest_size=8).digest()
        return int.from_bytes(digest, "little")

    def rng(self, tag: str, index: int = 0) -> np.random.Generator:
        return np.random.default_rng(self.child(tag, index))

    def spawn(self, tag: str, index: int = 0) -> "SeedSpec":
        """A nested SeedSpec whose master is the derived child seed."""
        return SeedSpec(self.child(tag, index))


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus a continuous or class-label response.

    Classification responses are integer class indices in {1..C}. Feature
    columns are always stored as float64; categorical features carry integer
    codes assigned at ingestion.
    """

    features: np.ndarray
    response: np.ndarray
    task: str
    feature_names: tuple = ()
    feature_kinds: tuple = ()
    num_classes: int | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError(f"features must be a nonempty 2-D matrix, got shape {X.shape}")
        if not np.isfinite(X).all():
            raise DataError("features contain non-finite entries")
        if self.task not in (REGRESSION, CLASSIFICATION):
            raise DataError(f"unknown task {self.task!r}")
        if self.task == REGRESSION:
            y = np.asarray(self.response, dtype=np.float64)
            if not np.isfinite(y).all():
                raise DataError("regression response contains non-finite entries")
        else:
            y = np.asarray(self.response, dtype=np.int64)
            if self.num_classes is None:
                object.__setattr__(self, "num_classes", int(y.max()))
            if y.min() < 1 or y.max() > self.num_classes:
                raise DataError(
                    f"class labels must lie in 1..{self.num_classes}, "
                    f"got range [{y.min()}, {y.max()}]"
                )
        if y.shape != (X.shape[0],):
            raise DataError(
                f"response length {y.shape} does not match {X.shape[0]} feature rows"
            )
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        kinds = tuple(self.feature_kinds) or (NUMERIC,) * X.shape[1]
        if len(names) != X.shape[1] or len(kinds) != X.shape[1]:
            raise DataError("feature_names / feature_kinds length mismatch")
        for k in kinds:
            if k not in (NUMERIC, CATEGORICAL):
                raise DataError(f"unknown feature kind {k!r}")
        object.__setattr__(self, "features", _freeze(X))
        object.__setattr__(self, "response", _freeze(y))
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "feature_kinds", kinds)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            self.features[idx],
            self.response[idx],
            self.task,
            self.feature_names,
            self.feature_kinds,
            self.num_classes,
        )


_EMPTY = np.empty(0, dtype=np.int64)
_EMPTY.setflags(write=False)


@dataclass(frozen=True)
class DataSplit:
    """Disjoint index lists into a Dataset."""

    train_idx: np.ndarray = field(default_factory=lambda: _EMPTY)
    val_idx: np.ndarray = field(default_factory=lambda: _EMPTY)
    cal_idx: np.ndarray = field(default_factory=lambda: _EMPTY)
    test_idx: np.ndarray = field(default_factory=lambda: _EMPTY)

    def __post_init__(self):
        for name in ("train_idx", "val_idx", "cal_idx", "test_idx"):
            object.__setattr__(self, name, _freeze(np.asarray(getattr(self, name), dtype=np.int64)))
        parts = [self.train_idx, self.val_idx, self.cal_idx, self.test_idx]
        combined = np.concatenate(parts)
        if len(np.unique(combined)) != len(combined):
            raise DataError("split parts are not disjoint")
        if len(self.train_idx) == 0:
            raise DataError("train part must be nonempty")


_PART_NAMES = {
    1: ("train",),
    2: ("train", "test"),
    3: ("train", "val", "test"),
    4: ("train", "val", "cal", "test"),
}


def split_indices(n: int, fractions, seed: SeedSpec, parts=None) -> dict:
    """Uniformly random disjoint partition of range(n) into named parts.

    Sizes are floor(fraction * n) with the remainder assigned to the first
    part. Indices within each part are returned sorted ascending.
    """
    fractions = tuple(float(f) for f in fractions)
    if parts is None:
        if len(fractions) not in _PART_NAMES:
            raise ConfigError(f"cannot infer part names for {len(fractions)} fractions")
        parts = _PART_NAMES[len(fractions)]
    if len(parts) != len(fractions):
        raise ConfigError("parts and fractions length mismatch")
    for f in fractions:
        if not (0.0 <= f <= 1.0):
            raise ConfigError(f"fractions must lie in [0, 1], got {f}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {sum(fractions)}")
    if min(fractions) * n < 1:
        raise ConfigError(
            f"smallest fraction {min(fractions)} yields an empty part for n={n}"
        )
    perm = seed.rng("split").permutation(n)
    sizes = [int(f * n) for f in fractions]
    sizes[0] += n - sum(sizes)
    out = {}
    start = 0
    for name, size in zip(parts, sizes):
        out[name] = np.sort(perm[start:start + size])
        start += size
    return out


def split_data(dataset: Dataset, fractions, seed: SeedSpec, parts=None) -> DataSplit:
    named = split_indices(dataset.n, fractions, seed, parts)
    return DataSplit(
        train_idx=named.get("train", _EMPTY),
        val_idx=named.get("val", _EMPTY),
        cal_idx=named.get("cal", _EMPTY),
        test_idx=named.get("test", _EMPTY),
    )


@dataclass(frozen=True)
class BootstrapPlan:
    """B with-replacement resamples of range(n) plus exact out-of-bag sets."""

    n: int
    B: int
    resamples: np.ndarray
    oob_mask: np.ndarray

    def oob(self, i: int) -> np.ndarray:
        """Bootstrap indices whose resample excludes sample i."""
        return np.flatnonzero(self.oob_mask[i])

    @property
    def mean_oob_fraction(self) -> float:
        return float(self.oob_mask.mean())


def make_bootstrap_plan(n: int, B: int, seed: SeedSpec) -> BootstrapPlan:
    if n < 2:
        raise ConfigError(f"bootstrap needs n >= 2, got {n}")
    if B < 1:
        raise ConfigError(f"bootstrap needs B >= 1, got {B}")
    rng = seed.rng("bootstrap-plan")
    resamples = rng.integers(0, n, size=(B, n), dtype=np.int64)
    oob_mask = np.empty((n, B), dtype=bool)
    for b in range(B):
        counts = np.bincount(resamples[b], minlength=n)
        oob_mask[:, b] = counts == 0
    resamples = _freeze(resamples)
    oob_mask = _freeze(oob_mask)
    return BootstrapPlan(n=n, B=B, resamples=resamples, oob_mask=oob_mask)


def rank_of(beta: float, m: int) -> int:
    """1-based order-statistic rank ceil(beta*m), clipped to at least 1.

    The 1e-9 nudge absorbs float roundoff in beta*m; real fractional parts of
    the products in play are orders of magnitude larger.
    """
    return max(1, math.ceil(beta * m - 1e-9))


def quantile(values, beta: float) -> float:
    """The ceil(beta*m)-th smallest of m values; beta=0 maps to the minimum.

    This higher-order-statistic convention (no interpolation) is used for
    every calibration quantile in the package.
    """
    vals = np.asarray(values, dtype=np.float64).ravel()
    if vals.size == 0:
        raise DataError("quantile of an empty multiset")
    if not (0.0 <= beta <= 1.0):
        raise ConfigError(f"beta must lie in [0, 1], got {beta}")
    k = rank_of(beta, vals.size)
    return float(np.partition(vals, k - 1)[k - 1])


def quantile_sorted(sorted_vals: np.ndarray, beta: float) -> float:
    """Same convention as :func:`quantile` for an already-sorted array."""
    m = sorted_vals.shape[0]
    if m == 0:
        raise DataError("quantile of an empty multiset")
    return float(sorted_vals[rank_of(beta, m) - 1])
