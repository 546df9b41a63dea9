"""Synthetic planted-lexicon corpora with exact gold tags.

Filler posts are random pseudo-words; toxic posts get one or two runs of
lexicon words planted at distinct gaps, so runs never touch and every gold
span is recoverable from word identity plus run boundaries.
"""

from __future__ import annotations

import hashlib
from typing import Sequence

import numpy as np

from .corpus import BioLabel, Post, TagSequence
from .textproc import Domain, Token

CONSONANTS = "bcdfghjklmnprstvz"
VOWELS = "aeiou"
CATEGORIES = ("hate_speech", "insult", "offensive", "profanity")
DEFAULT_DOMAINS = (Domain.SOCIAL_MEDIA, Domain.NEWS, Domain.YOUTUBE)


def derive_seed(seed: int, name: str) -> int:
    """Stable 63-bit sub-seed from ``(seed, name)`` via SHA-256."""
    digest = hashlib.sha256(f"{int(seed)}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def _words(rng: np.random.Generator, n: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < n:
        syllables = rng.integers(2, 4)
        w = "".join(CONSONANTS[rng.integers(len(CONSONANTS))] + VOWELS[rng.integers(len(VOWELS))]
                    for _ in range(syllables))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def generate(seed: int = 42, n_posts: int = 600, lexicon_size: int = 30,
             domains: Sequence[Domain | str] = DEFAULT_DOMAINS, disjoint_lexicons: bool = False,
             filler_size: int = 300, toxic_rate: float = 0.54, multi_span_rate: float = 0.12,
             min_len: int = 6, max_len: int = 14, max_span_len: int = 3) -> list[Post]:
    """Build ``n_posts`` posts spread round-robin over ``domains``.

    With ``disjoint_lexicons`` every domain plants words from its own
    lexicon; otherwise all domains share one lexicon and are identically
    distributed.
    """
    domains = [d if isinstance(d, Domain) else Domain.parse(d) for d in domains]
    rng = np.random.default_rng(derive_seed(seed, "synth"))
    taken: set[str] = set()
    filler = _words(rng, filler_size, taken)
    if disjoint_lexicons:
        lexicons = {d: _words(rng, lexicon_size, taken) for d in domains}
    else:
        shared = _words(rng, lexicon_size, taken)
        lexicons = {d: shared for d in domains}
    category_of = {w: CATEGORIES[i % len(CATEGORIES)]
                   for lex in lexicons.values() for i, w in enumerate(lex)}

    posts = []
    for i in range(n_posts):
        dom = domains[i % len(domains)]
        length = int(rng.integers(min_len, max_len + 1))
        words = [filler[k] for k in rng.integers(len(filler), size=length)]
        labels = [BioLabel.O] * length
        category = None
        if rng.random() < toxic_rate:
            n_spans = 2 if rng.random() < multi_span_rate else 1
            gaps = sorted(rng.choice(length + 1, size=n_spans, replace=False).tolist(), reverse=True)
            lex = lexicons[dom]
            for gap in gaps:
                span = [lex[k] for k in rng.integers(len(lex), size=int(rng.integers(1, max_span_len + 1)))]
                words[gap:gap] = span
                labels[gap:gap] = [BioLabel.B_TOXIC] + [BioLabel.I_TOXIC] * (len(span) - 1)
            first = next(j for j, lab in enumerate(labels) if lab == BioLabel.B_TOXIC)
            category = category_of[words[first]]
        tokens, pos = [], 0
        for w in words:
            tokens.append(Token(w, pos, pos + len(w)))
            pos += len(w) + 1
        posts.append(Post(f"synth-{seed}-{i:05d}", dom, " ".join(words), tuple(tokens),
                          TagSequence(tuple(labels)), {}, category))
    return posts
