"""Signed feature hashing over wordpieces followed by a trainable linear
projection, plus a file-backed lookup for precomputed vectors."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

NORM_FLOOR = 1e-12


@lru_cache(maxsize=1 << 20)
def piece_hash(piece: str) -> int:
    """64-bit blake2b digest of the UTF-8 piece, read little-endian."""
    return int.from_bytes(hashlib.blake2b(piece.encode("utf-8"), digest_size=8).digest(), "little")


@lru_cache(maxsize=1 << 20)
def _bucket(piece: str, hash_dim: int) -> tuple[int, float]:
    h = piece_hash(piece)
    sign = -1.0 if (h >> 63) & 1 else 1.0
    return h % hash_dim, sign


def hashed_pieces(pieces: Sequence[str], hash_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Sparse form of :func:`featurize`: bucket indices and signs, one per
    piece occurrence (duplicates are summed by consumers)."""
    if hash_dim < 2:
        raise ValueError("hash_dim must be >= 2")
    if not pieces:
        return np.empty(0, dtype=np.intp), np.empty(0, dtype=np.float64)
    pairs = [_bucket(p, hash_dim) for p in pieces]
    idx = np.fromiter((b for b, _ in pairs), dtype=np.intp, count=len(pairs))
    sgn = np.fromiter((s for _, s in pairs), dtype=np.float64, count=len(pairs))
    return idx, sgn


def featurize(pieces: Sequence[str], hash_dim: int) -> np.ndarray:
    idx, sgn = hashed_pieces(pieces, hash_dim)
    out = np.zeros(hash_dim, dtype=np.float64)
    np.add.at(out, idx, sgn)
    return out


def featurize_many(piece_lists: Sequence[Sequence[str]], hash_dim: int) -> np.ndarray:
    out = np.zeros((len(piece_lists), hash_dim), dtype=np.float64)
    for row, pieces in zip(out, piece_lists):
        idx, sgn = hashed_pieces(pieces, hash_dim)
        np.add.at(row, idx, sgn)
    return out


@dataclass(frozen=True)
class EmbedderState:
    hash_dim: int
    out_dim: int
    projection: np.ndarray
    version: int = 0

    def __post_init__(self):
        if self.projection.shape != (self.out_dim, self.hash_dim):
            raise ValueError(f"projection shape {self.projection.shape} != ({self.out_dim}, {self.hash_dim})")
        if not np.all(np.isfinite(self.projection)):
            raise ValueError("projection contains non-finite values")

    @classmethod
    def initial(cls, hash_dim: int = 512, out_dim: int = 64, seed: int = 0) -> "EmbedderState":
        if hash_dim < 2 or out_dim < 1:
            raise ValueError("hash_dim must be >= 2 and out_dim >= 1")
        rng = np.random.default_rng(seed)
        projection = rng.standard_normal((out_dim, hash_dim)) / math.sqrt(hash_dim)
        return cls(hash_dim, out_dim, projection)

    def updated(self, projection: np.ndarray) -> "EmbedderState":
        return replace(self, projection=projection, version=self.version + 1)


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm < NORM_FLOOR:
        return np.zeros_like(v)
    return v / norm


def embed(state: EmbedderState, pieces: Sequence[str]) -> np.ndarray:
    idx, sgn = hashed_pieces(pieces, state.hash_dim)
    return _unit(state.projection[:, idx] @ sgn)


def embed_features(state: EmbedderState, features: np.ndarray) -> np.ndarray:
    """Row-wise embedding of dense featurized inputs."""
    u = np.atleast_2d(features) @ state.projection.T
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    safe = np.where(norms < NORM_FLOOR, 1.0, norms)
    return np.where(norms < NORM_FLOOR, 0.0, u / safe)


class FileEmbeddings(dict):
    """id -> vector map read from ``id<TAB>v1,v2,...`` lines."""

    dim: int = 0

    def __missing__(self, key):
        raise KeyError(f"embedding not found: {key!r}")


def load_file_embedder(path) -> FileEmbeddings:
    out = FileEmbeddings()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                key, values = line.split("\t", 1)
                vec = np.array([float(v) for v in values.split(",")], dtype=np.float64)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed embedding line") from None
            if key in out:
                raise ValueError(f"{path}:{lineno}: duplicate embedding id {key!r}")
            if out and len(vec) != out.dim:
                raise ValueError(f"{path}:{lineno}: ragged dimensions ({len(vec)} != {out.dim})")
            out.dim = len(vec)
            out[key] = vec
    return out


def write_embedding_file(path, vectors: Mapping[str, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, vec in vectors.items():
            if "\t" in key or "\n" in key:
                raise ValueError(f"id {key!r} contains a tab or newline")
            fh.write(key + "\t" + ",".join(repr(float(v)) for v in vec) + "\n")
