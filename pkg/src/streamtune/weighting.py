"""Per-item sampling weights: length, TF-IDF sum and wordpiece/token ratio."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .tokenizer import TokenizedText

EPS = 1e-6

METHODS = ("random", "length", "length_class", "tfidf", "tfidf_class", "wpratio", "wpratio_class", "none")


@dataclass(frozen=True)
class DocumentFrequencyTable:
    df: Mapping[str, int]
    n_docs: int

    def idf(self, token: str) -> float:
        try:
            count = self.df[token]
        except KeyError:
            raise KeyError(f"inconsistent DF table: {token!r} not present") from None
        return math.log(self.n_docs / count)


@dataclass(frozen=True)
class WeightedCandidate:
    item_index: int
    base_weight: float
    adjusted_weight: float
    probability: float


def _require_items(buffer: Sequence) -> None:
    if len(buffer) == 0:
        raise ValueError("empty buffer")


def length_weights(buffer: Sequence[TokenizedText]) -> np.ndarray:
    _require_items(buffer)
    lengths = np.array([t.token_count for t in buffer], dtype=np.float64)
    lo, hi = lengths.min(), lengths.max()
    if hi == lo:
        return np.ones_like(lengths)
    return (lengths - lo) / (hi - lo) + EPS


def build_df(buffer: Sequence[TokenizedText]) -> DocumentFrequencyTable:
    _require_items(buffer)
    df = Counter()
    for doc in buffer:
        df.update(set(doc.tokens))
    return DocumentFrequencyTable(dict(df), len(buffer))


def tfidf_weights(buffer: Sequence[TokenizedText], table: DocumentFrequencyTable) -> np.ndarray:
    _require_items(buffer)
    out = np.empty(len(buffer), dtype=np.float64)
    for i, doc in enumerate(buffer):
        tf = Counter(doc.tokens)
        out[i] = sum(count * table.idf(tok) for tok, count in tf.items())
    return out + EPS


def wp_ratio_weights(buffer: Sequence[TokenizedText]) -> np.ndarray:
    _require_items(buffer)
    return np.array(
        [t.wordpiece_count / t.token_count if t.token_count > 0 else EPS for t in buffer],
        dtype=np.float64,
    )


def base_method(method: str) -> str:
    """``"tfidf_class"`` -> ``"tfidf"``; the class suffix only toggles adjustment."""
    if method not in METHODS:
        raise ValueError(f"unknown sampling method {method!r}")
    return method[: -len("_class")] if method.endswith("_class") else method


def uses_class_adjustment(method: str) -> bool:
    return base_method(method) != method


def compute_weights(method: str, buffer: Sequence[TokenizedText]) -> np.ndarray:
    kind = base_method(method)
    if kind == "length":
        return length_weights(buffer)
    if kind == "tfidf":
        return tfidf_weights(buffer, build_df(buffer))
    if kind == "wpratio":
        return wp_ratio_weights(buffer)
    raise ValueError(f"method {method!r} does not use weights")
