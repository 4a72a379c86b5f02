"""Synthetic labeled text streams with a vocabulary shift at a drift point.

Words are built from consonant-vowel syllables. The emitted vocabulary holds
every syllable (word-initial and ``##`` forms), the ASCII alphabet, and the
whole-word entries for the noise words and most pre-drift class words; the
remaining "rare" class words and every post-drift word are absent, so they
split into several wordpieces.
"""

from __future__ import annotations

from itertools import product

import numpy as np

from .data import StreamItem
from .tokenizer import CONTINUATION, Vocabulary

CONSONANTS = "bcdfghjklmnprstvwz"
VOWELS = "aeiou"
SYLLABLES = tuple(c + v for c, v in product(CONSONANTS, VOWELS))


def _fresh_words(rng, count, taken):
    words = []
    while len(words) < count:
        n_syl = int(rng.integers(2, 4))
        word = "".join(SYLLABLES[k] for k in rng.integers(0, len(SYLLABLES), size=n_syl))
        if word not in taken:
            taken.add(word)
            words.append(word)
    return words


def synth_drift_stream(
    n_items: int,
    n_classes: int,
    drift_point: int,
    vocab_shift_fraction: float,
    seed: int = 0,
    *,
    words_per_class: int = 120,
    noise_words: int = 300,
    class_word_prob: float = 0.4,
    rare_fraction: float = 0.3,
    prior_decay: float = 0.5,
    min_words: int = 5,
    max_words: int = 30,
) -> tuple[list[StreamItem], Vocabulary]:
    """Generate ``n_items`` timestamped items and the matching vocabulary.

    Class priors decay geometrically (class ``k`` has mass proportional to
    ``prior_decay ** k``). From ``drift_point`` on, a
    ``vocab_shift_fraction`` share of each class's words is swapped for new,
    out-of-vocabulary words.
    """
    if n_items < 1 or n_classes < 2:
        raise ValueError("need n_items >= 1 and n_classes >= 2")
    if not 0 <= drift_point < n_items:
        raise ValueError("drift_point must lie in [0, n_items)")
    if not 0.0 <= vocab_shift_fraction <= 1.0:
        raise ValueError("vocab_shift_fraction must be in [0, 1]")
    if words_per_class < 1 or noise_words < 1 or not 1 <= min_words <= max_words:
        raise ValueError("degenerate word-set parameters")
    if not 0.0 < prior_decay <= 1.0 or not 0.0 <= class_word_prob <= 1.0:
        raise ValueError("prior_decay must be in (0, 1] and class_word_prob in [0, 1]")

    rng = np.random.default_rng(seed)
    taken: set = set()
    noise = _fresh_words(rng, noise_words, taken)
    before = [_fresh_words(rng, words_per_class, taken) for _ in range(n_classes)]

    vocab_words = set(noise)
    for words in before:
        keep = rng.permutation(words_per_class)[int(round(rare_fraction * words_per_class)):]
        vocab_words.update(words[k] for k in keep)

    n_shift = int(round(vocab_shift_fraction * words_per_class))
    after = []
    for words in before:
        shifted = list(words)
        for k, new in zip(rng.permutation(words_per_class)[:n_shift], _fresh_words(rng, n_shift, taken)):
            shifted[k] = new
        after.append(shifted)

    priors = prior_decay ** np.arange(n_classes)
    priors /= priors.sum()
    labels = rng.choice(n_classes, size=n_items, p=priors)
    lengths = rng.integers(min_words, max_words + 1, size=n_items)

    items = []
    for i in range(n_items):
        label = int(labels[i])
        words = (after if i >= drift_point else before)[label]
        n = int(lengths[i])
        from_class = rng.random(n) < class_word_prob
        class_pick = rng.integers(0, words_per_class, size=n)
        noise_pick = rng.integers(0, len(noise), size=n)
        text = " ".join(words[c] if f else noise[z] for f, c, z in zip(from_class, class_pick, noise_pick))
        items.append(StreamItem(f"s{i:07d}", text, label, i))

    pieces = set(vocab_words)
    pieces.update(SYLLABLES)
    pieces.update(CONTINUATION + s for s in SYLLABLES)
    return items, Vocabulary.from_pieces(pieces, with_alphabet=True)
