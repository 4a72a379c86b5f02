"""Weighted sampling of buffered items (class adjustment, normalization,
exponential-key draws without replacement) plus uniform random sampling."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Mapping, Optional, Sequence

import numpy as np

from .weighting import WeightedCandidate


@dataclass(frozen=True)
class ClassFrequencies:
    counts: Mapping[Hashable, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @classmethod
    def from_labels(cls, labels: Sequence[Hashable]) -> "ClassFrequencies":
        return cls(dict(Counter(labels)))


@dataclass(frozen=True)
class SampleRequest:
    n_s: int
    use_class_adjustment: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_s < 1:
            raise ValueError("n_s must be a positive integer")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")


def adjust_for_class(weights, classes: Sequence[Hashable], freqs: ClassFrequencies) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    if len(weights) != len(classes):
        raise ValueError("weights and classes are not aligned")
    total = freqs.total
    factors = np.empty(len(classes), dtype=np.float64)
    for i, c in enumerate(classes):
        count = freqs.counts.get(c, 0)
        if count < 1:
            raise KeyError(f"unknown class frequency for class {c!r}")
        factors[i] = total / count
    return weights * factors


def normalize(weights) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValueError("weights must be finite and non-negative")
    total = weights.sum()
    if total <= 0:
        raise ValueError("degenerate weights")
    return weights / total


def weighted_sample(probabilities, request: SampleRequest) -> np.ndarray:
    """Draw ``request.n_s`` distinct indices; each item gets the key
    ``-ln(u) / p`` with ``u ~ U(0, 1]`` and the smallest keys win."""
    p = np.asarray(probabilities, dtype=np.float64)
    positive = np.flatnonzero(p > 0)
    if request.n_s > len(positive):
        raise ValueError(
            f"sample size too large: n_s={request.n_s} but only {len(positive)} items have positive probability"
        )
    rng = np.random.default_rng(request.rng_seed)
    u = 1.0 - rng.random(len(p))
    keys = -np.log(u[positive]) / p[positive]
    order = np.argsort(keys, kind="stable")[: request.n_s]
    return positive[order]


def random_sample(buffer_size: int, request: SampleRequest) -> np.ndarray:
    if buffer_size < 1:
        raise ValueError("buffer_size must be positive")
    if request.n_s > buffer_size:
        raise ValueError(f"sample size too large: n_s={request.n_s} > buffer_size={buffer_size}")
    rng = np.random.default_rng(request.rng_seed)
    return rng.choice(buffer_size, size=request.n_s, replace=False)


def weighted_sampling(
    weights,
    classes: Sequence[Hashable],
    request: SampleRequest,
    freqs: Optional[ClassFrequencies] = None,
) -> tuple[np.ndarray, list[WeightedCandidate]]:
    """Full weighted-sampling pass over a buffer.

    When class adjustment is requested and ``freqs`` is None, frequencies
    are counted from ``classes``. Returns the selected indices and one
    candidate record per buffered item.
    """
    base = np.asarray(weights, dtype=np.float64)
    if len(base) == 0:
        raise ValueError("empty buffer")
    if request.use_class_adjustment:
        if freqs is None:
            freqs = ClassFrequencies.from_labels(classes)
        adjusted = adjust_for_class(base, classes, freqs)
    else:
        adjusted = base
    probs = normalize(adjusted)
    chosen = weighted_sample(probs, request)
    candidates = [
        WeightedCandidate(i, float(base[i]), float(adjusted[i]), float(probs[i])) for i in range(len(base))
    ]
    return chosen, candidates
