"""Word-level pre-tokenization and greedy WordPiece decomposition."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from string import ascii_lowercase, digits
from typing import Iterable, Sequence

UNK = "[UNK]"
CONTINUATION = "##"

# A word run is letters/digits (no underscore); everything else that is not
# whitespace is punctuation, and consecutive punctuation stays together.
_TOKEN_RE = re.compile(r"[^\W_]+|(?:[^\w\s]|_)+")


@dataclass(frozen=True)
class Vocabulary:
    entries: frozenset
    unk_piece_count: int = 2
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if not self.entries:
            raise ValueError("vocabulary is empty")
        if self.unk_piece_count < 1:
            raise ValueError("unk_piece_count must be positive")
        for entry in self.entries:
            body = entry[2:] if entry.startswith(CONTINUATION) else entry
            if not body:
                raise ValueError(f"invalid vocabulary entry {entry!r}")
            if body.startswith(CONTINUATION):
                raise ValueError(f"entry {entry!r} has more than one '##' prefix")
        # longest entry bounds the greedy search window
        object.__setattr__(self, "_max_len", max(len(e) for e in self.entries))

    def __contains__(self, piece: str) -> bool:
        return piece in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_pieces(cls, pieces: Iterable[str], unk_piece_count: int = 2, with_alphabet: bool = False):
        """Build a vocabulary; ``with_alphabet`` adds every ASCII letter and
        digit both as a word-initial and a ``##`` continuation piece, which
        makes every lowercase alphanumeric token decomposable."""
        entries = set(pieces)
        if with_alphabet:
            for ch in ascii_lowercase + digits:
                entries.add(ch)
                entries.add(CONTINUATION + ch)
        return cls(frozenset(entries), unk_piece_count)

    @classmethod
    def load(cls, path, unk_piece_count: int = 2) -> "Vocabulary":
        text = Path(path).read_text(encoding="utf-8")
        pieces = [line.strip() for line in text.splitlines()]
        return cls(frozenset(p for p in pieces if p), unk_piece_count)

    def save(self, path) -> None:
        Path(path).write_text("".join(p + "\n" for p in sorted(self.entries)), encoding="utf-8")


@dataclass(frozen=True)
class TokenizedText:
    tokens: tuple
    pieces_per_token: tuple
    pieces: tuple

    @property
    def token_count(self) -> int:
        return len(self.tokens)

    @property
    def wordpiece_count(self) -> int:
        return sum(self.pieces_per_token)

    @property
    def ratio(self) -> float:
        return self.wordpiece_count / self.token_count if self.tokens else 0.0


def pre_tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def wordpiece_split(token: str, vocab: Vocabulary) -> list[str]:
    """Greedy longest-match-first split; returns ``[UNK]`` when the greedy
    walk reaches a position no entry matches."""
    cached = vocab._cache.get(token)
    if cached is not None:
        return list(cached)

    pieces = []
    start, n = 0, len(token)
    while start < n:
        end = min(n, start + vocab._max_len)
        match = None
        while end > start:
            piece = token[start:end]
            if start > 0:
                piece = CONTINUATION + piece
            if piece in vocab.entries:
                match = piece
                break
            end -= 1
        if match is None:
            pieces = [UNK]
            break
        pieces.append(match)
        start = end

    vocab._cache[token] = tuple(pieces)
    return pieces


def tokenize(text: str, vocab: Vocabulary) -> TokenizedText:
    tokens = pre_tokenize(text)
    counts = []
    all_pieces = []
    for tok in tokens:
        pieces = wordpiece_split(tok, vocab)
        if pieces == [UNK]:
            counts.append(vocab.unk_piece_count)
        else:
            counts.append(len(pieces))
        all_pieces.extend(pieces)
    return TokenizedText(tuple(tokens), tuple(counts), tuple(all_pieces))


def strip_markers(pieces: Sequence[str]) -> str:
    return "".join(p[2:] if p.startswith(CONTINUATION) else p for p in pieces)
