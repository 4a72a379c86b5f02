"""Incremental one-vs-rest linear SVM trained with Pegasos-style steps."""

from __future__ import annotations

import numpy as np


class IncrementalSVM:
    """One binary hinge-loss machine per class, step size ``1 / (lambda t)``.

    Classes are registered the first time they are seen in :meth:`learn`,
    with zero weights, and kept in first-seen order.
    """

    def __init__(self, dim: int, lam: float = 1e-4):
        if dim < 1:
            raise ValueError("dim must be positive")
        if lam <= 0:
            raise ValueError("lambda must be positive")
        self.dim = dim
        self.lam = lam
        self.classes: list[int] = []
        self._index: dict[int, int] = {}
        self.weights = np.zeros((0, dim))
        self.biases = np.zeros(0)
        self.step_count = 0

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ValueError(f"dimension mismatch: expected ({self.dim},), got {x.shape}")
        return x

    def scores(self, x) -> np.ndarray:
        return self.weights @ self._check(x) + self.biases

    def predict(self, x) -> int:
        if not self.classes:
            raise RuntimeError("no classes seen")
        s = self.scores(x)
        tied = np.flatnonzero(s == s.max())
        if len(tied) == 1:
            return self.classes[tied[0]]
        return min(self.classes[i] for i in tied)

    def register(self, y: int) -> None:
        if y in self._index:
            return
        self._index[y] = len(self.classes)
        self.classes.append(y)
        self.weights = np.vstack([self.weights, np.zeros((1, self.dim))])
        self.biases = np.append(self.biases, 0.0)

    def learn(self, x, y: int) -> None:
        x = self._check(x)
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite input")
        self.register(y)
        self.step_count += 1
        eta = 1.0 / (self.lam * self.step_count)
        target = -np.ones(len(self.classes))
        target[self._index[y]] = 1.0
        violated = target * (self.weights @ x + self.biases) < 1.0
        self.weights *= 1.0 - eta * self.lam
        self.weights[violated] += eta * target[violated, None] * x
        self.biases[violated] += eta * target[violated]
