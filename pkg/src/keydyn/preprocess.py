"""Standardization, the half-weight-on-latest sample buffer, and augmentation.

Feature vectors are standardized per slot against genuine training data, then
smoothed through a sliding buffer of B entries whose merged output gives the
B-1 older vectors a weight of 1/(2(B-1)) each and the newest vector a weight
of 1/2.  Training sets are grown by sampling distinct B-subsets of the raw
vectors and merging each subset the same way.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError
from .events import FeatureVector

DEFAULT_BUFFER_SIZE = 5
DEFAULT_EPSILON = 1e-8

# Enumerating all combinations is exact but only worth it for small spaces;
# above this we rejection-sample distinct subsets.
_ENUMERATION_LIMIT = 200_000


def as_matrix(vectors) -> np.ndarray:
    """Coerce an (n, D) array, a list of arrays, or a list of FeatureVector."""
    if isinstance(vectors, np.ndarray):
        mat = np.asarray(vectors, dtype=np.float64)
        if mat.ndim != 2:
            raise ValueError(f"expected a 2-D matrix, got shape {mat.shape}")
        return mat
    rows = [v.values if isinstance(v, FeatureVector) else np.asarray(v, np.float64)
            for v in vectors]
    if not rows:
        raise ValueError("no vectors given")
    return np.stack(rows).astype(np.float64)


@dataclass(frozen=True)
class Standardizer:
    """Per-slot mean/std fit on genuine training vectors only."""

    mean: np.ndarray
    std: np.ndarray
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ValueError("mean/std must be 1-D vectors of equal length")
        if np.any(std < self.epsilon):
            raise ValueError("std entries must be clamped to >= epsilon")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(f"dimension mismatch: {x.shape[-1]} != {self.dim}")
        return (x - self.mean) / self.std

    def inverse(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(f"dimension mismatch: {x.shape[-1]} != {self.dim}")
        return x * self.std + self.mean

    def to_dict(self) -> dict:
        return {"kind": "standardize", "mean": self.mean.tolist(),
                "std": self.std.tolist(), "epsilon": self.epsilon}

    @staticmethod
    def from_dict(d: dict) -> "Standardizer":
        return Standardizer(np.array(d["mean"]), np.array(d["std"]), d["epsilon"])


def fit_standardizer(vectors, epsilon: float = DEFAULT_EPSILON) -> Standardizer:
    """Per-slot sample mean and population (N-denominator) std, clamped below.

    Raises InsufficientDataError for fewer than 2 vectors.
    """
    mat = as_matrix(vectors)
    if mat.shape[0] < 2:
        raise InsufficientDataError(
            f"need at least 2 vectors to fit a standardizer, got {mat.shape[0]}"
        )
    mean = mat.mean(axis=0)
    std = mat.std(axis=0)  # population convention
    std = np.maximum(std, epsilon)
    return Standardizer(mean=mean, std=std, epsilon=epsilon)


def standardize(s: Standardizer, v: FeatureVector) -> FeatureVector:
    """Standardize one feature vector, preserving its layout."""
    if v.layout.dim != s.dim:
        raise ValueError(f"dimension mismatch: vector {v.layout.dim}, fit {s.dim}")
    return v.with_values(s.transform(v.values))


@dataclass(frozen=True)
class MinMaxNormalizer:
    """Per-slot affine map of the training [min, max] onto ``feature_range``.

    The alternative preprocessing preset; unlike standardization its scale is
    set by the two most extreme training points, so injected outliers compress
    everything else.  Degenerate spans are clamped to ``epsilon``.
    """

    low: np.ndarray
    span: np.ndarray
    feature_range: tuple[float, float] = (0.0, 1.0)
    epsilon: float = DEFAULT_EPSILON

    @property
    def dim(self) -> int:
        return self.low.shape[0]

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(f"dimension mismatch: {x.shape[-1]} != {self.dim}")
        lo, hi = self.feature_range
        return lo + (x - self.low) / self.span * (hi - lo)

    def to_dict(self) -> dict:
        return {"kind": "minmax", "low": self.low.tolist(), "span": self.span.tolist(),
                "feature_range": list(self.feature_range), "epsilon": self.epsilon}

    @staticmethod
    def from_dict(d: dict) -> "MinMaxNormalizer":
        return MinMaxNormalizer(np.array(d["low"]), np.array(d["span"]),
                                tuple(d["feature_range"]), d["epsilon"])


def fit_minmax(vectors, feature_range: tuple[float, float] = (0.0, 1.0),
               epsilon: float = DEFAULT_EPSILON) -> MinMaxNormalizer:
    mat = as_matrix(vectors)
    if mat.shape[0] < 2:
        raise InsufficientDataError(
            f"need at least 2 vectors to fit a normalizer, got {mat.shape[0]}"
        )
    low = mat.min(axis=0)
    span = np.maximum(mat.max(axis=0) - low, epsilon)
    return MinMaxNormalizer(low=low, span=span, feature_range=feature_range,
                            epsilon=epsilon)


def buffer_weights(capacity: int) -> np.ndarray:
    """Merge weights for a full buffer: oldest-first, newest entry last.

    The B-1 older entries get 1/(2(B-1)) each and the newest gets 1/2, so the
    weights always sum to exactly 1.
    """
    if capacity < 2:
        raise ValueError(f"buffer capacity must be >= 2, got {capacity}")
    w = np.full(capacity, 1.0 / (2.0 * (capacity - 1)))
    w[-1] = 0.5
    return w


def weighted_merge(history: Sequence[np.ndarray], latest: np.ndarray) -> np.ndarray:
    """Merge B-1 history vectors plus the latest input with the buffer weights."""
    latest = np.asarray(latest, dtype=np.float64)
    stack = np.stack([np.asarray(h, dtype=np.float64) for h in history] + [latest])
    return buffer_weights(stack.shape[0]) @ stack


class SampleBuffer:
    """Sliding window emitting the weighted merge once B inputs are present.

    Single-writer: push inputs in arrival order.  Until the window holds B-1
    prior vectors, ``push`` returns None (not ready); afterwards each push
    emits the merge of the stored history with the new input as the
    half-weight latest entry, then slides the window forward by one.
    """

    def __init__(self, capacity: int = DEFAULT_BUFFER_SIZE):
        if capacity < 2:
            raise ValueError(f"buffer capacity must be >= 2, got {capacity}")
        self.capacity = capacity
        self._window: list[np.ndarray] = []

    @property
    def window(self) -> tuple[np.ndarray, ...]:
        return tuple(self._window)

    @property
    def ready(self) -> bool:
        return len(self._window) == self.capacity - 1

    def push(self, latest: np.ndarray) -> np.ndarray | None:
        latest = np.asarray(latest, dtype=np.float64)
        if not self.ready:
            self._window.append(latest)
            return None
        out = weighted_merge(self._window, latest)
        self._window = self._window[1:] + [latest]
        return out


def augment(vectors, capacity: int, count: int, seed: int) -> np.ndarray:
    """Sample ``count`` distinct B-subsets and merge each with the buffer weights.

    Subsets are drawn uniformly without replacement from all C(N, B)
    combinations (seeded, reproducible) and ordered by original index, so the
    highest-index element of each subset plays the half-weight latest role.
    """
    mat = as_matrix(vectors)
    n = mat.shape[0]
    if capacity < 2:
        raise ValueError(f"buffer capacity must be >= 2, got {capacity}")
    if n < capacity:
        raise InsufficientDataError(f"need at least B={capacity} vectors, got {n}")
    total = math.comb(n, capacity)
    if count > total:
        raise ValueError(
            f"requested {count} augmented vectors but only C({n},{capacity})={total} "
            f"distinct subsets exist"
        )
    rng = np.random.default_rng(seed)
    if total <= _ENUMERATION_LIMIT:
        combos = list(itertools.combinations(range(n), capacity))
        chosen = rng.choice(total, size=count, replace=False)
        subsets = [combos[i] for i in chosen]
    else:
        seen = set()
        subsets = []
        while len(subsets) < count:
            pick = tuple(sorted(rng.choice(n, size=capacity, replace=False).tolist()))
            if pick not in seen:
                seen.add(pick)
                subsets.append(pick)

    weights = buffer_weights(capacity)
    out = np.empty((count, mat.shape[1]), dtype=np.float64)
    for i, subset in enumerate(subsets):
        out[i] = weights @ mat[list(subset)]
    return out
