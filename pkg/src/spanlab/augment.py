"""Label-preserving augmentation: synonym replacement, token masking, code-switching.

Toxic tokens (gold B or I) are never eligible for any transformation, so
the label sequence and every toxic surface survive untouched.  Offsets are
recomputed after surfaces change; the original inter-token separators are
kept.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .corpus import BioLabel, Post
from .errors import ConfigError
from .synth import derive_seed
from .textproc import Token, _data_path


@dataclass(frozen=True)
class SynonymConfig:
    enabled: bool = False
    replace_frac: tuple[float, float] = (0.10, 0.15)
    dictionary: str | None = None


@dataclass(frozen=True)
class MaskingConfig:
    enabled: bool = False
    mask_prob: float = 0.05
    mask_token: str = "[MASK]"


@dataclass(frozen=True)
class CodeSwitchConfig:
    enabled: bool = False
    sample_frac: float = 0.15
    word_frac: tuple[float, float] = (0.20, 0.30)
    dictionary: str | None = None


@dataclass(frozen=True)
class AugmentConfig:
    synonym: SynonymConfig = field(default_factory=SynonymConfig)
    masking: MaskingConfig = field(default_factory=MaskingConfig)
    codeswitch: CodeSwitchConfig = field(default_factory=CodeSwitchConfig)
    seed: int = 42

    def __post_init__(self):
        probs = [self.masking.mask_prob, self.codeswitch.sample_frac, *self.synonym.replace_frac,
                 *self.codeswitch.word_frac]
        if any(not 0 <= p <= 1 for p in probs):
            raise ConfigError("augmentation probabilities must lie in [0, 1]")
        for lo, hi in (self.synonym.replace_frac, self.codeswitch.word_frac):
            if lo > hi:
                raise ConfigError("fraction band must be (low, high) with low <= high")


@functools.lru_cache(maxsize=16)
def load_dictionary(path: str) -> dict[str, tuple[str, ...]]:
    """``word<TAB>alt[,alt...]`` lines; ``#`` starts a comment line."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"dictionary file not found: {path}")
    table: dict[str, tuple[str, ...]] = {}
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip():
            raise ConfigError("expected word<TAB>alternatives", path, lineno)
        alts = tuple(a.strip() for a in parts[1].split(",") if a.strip())
        if not alts:
            raise ConfigError("no alternatives given", path, lineno)
        table[parts[0].strip()] = alts
    return table


def _dictionary(path: str | None, demo: str) -> dict[str, tuple[str, ...]]:
    return load_dictionary(str(_data_path(demo)) if path is None else path)


def bidirectional(table: dict[str, tuple[str, ...]]) -> dict[str, tuple[str, ...]]:
    both = {k: list(v) for k, v in table.items()}
    for word, alts in table.items():
        for alt in alts:
            lst = both.setdefault(alt, [])
            if word not in lst:
                lst.append(word)
    return {k: tuple(v) for k, v in both.items()}


def rebuild(post: Post, surfaces: Sequence[str]) -> Post:
    """Same post with new token surfaces; separators between tokens are preserved."""
    if len(surfaces) != len(post.tokens):
        raise ValueError("surface count differs from token count")
    if list(surfaces) == post.surfaces:
        return post
    text = post.normalized_text
    out, tokens, cursor, prev_end = [], [], 0, 0
    for tok, surface in zip(post.tokens, surfaces):
        gap = text[prev_end:tok.char_start]
        out.append(gap)
        cursor += len(gap)
        tokens.append(Token(surface, cursor, cursor + len(surface)))
        out.append(surface)
        cursor += len(surface)
        prev_end = tok.char_end
    out.append(text[prev_end:])
    return Post(post.id, post.domain, "".join(out), tuple(tokens), post.gold,
                dict(post.annotator_labels), post.category)


def _non_toxic(post: Post) -> list[int]:
    if post.gold is None:
        return list(range(len(post.tokens)))
    return [i for i, lab in enumerate(post.gold) if lab == BioLabel.O]


def _stochastic_round(x: float, rng) -> int:
    base = math.floor(x)
    return base + int(rng.random() < x - base)


def _substitute(post: Post, table, band, rng) -> Post:
    eligible = [i for i in _non_toxic(post) if post.tokens[i].surface in table]
    frac = rng.uniform(*band)
    n = min(_stochastic_round(frac * len(eligible), rng), len(eligible))
    if n == 0:
        return post
    surfaces = post.surfaces
    for i in sorted(rng.choice(eligible, size=n, replace=False).tolist()):
        alts = table[surfaces[i]]
        surfaces[i] = alts[int(rng.integers(len(alts)))]
    return rebuild(post, surfaces)


def synonym_replace(post: Post, cfg: SynonymConfig, rng: np.random.Generator, dictionary=None) -> Post:
    """Replace a per-post fraction, drawn from ``cfg.replace_frac``, of eligible non-toxic words."""
    table = dictionary if dictionary is not None else _dictionary(cfg.dictionary, "synonyms_demo.tsv")
    return _substitute(post, table, cfg.replace_frac, rng)


def mask_tokens(post: Post, cfg: MaskingConfig, rng: np.random.Generator) -> Post:
    """Independently mask each non-toxic token with probability ``cfg.mask_prob``."""
    draws = rng.random(len(post.tokens))
    surfaces = post.surfaces
    for i in _non_toxic(post):
        if draws[i] < cfg.mask_prob:
            surfaces[i] = cfg.mask_token
    return rebuild(post, surfaces)


def codeswitch(post: Post, cfg: CodeSwitchConfig, rng: np.random.Generator, dictionary=None) -> Post:
    """For a ``sample_frac`` share of posts, swap 20-30% of covered non-toxic words into the other language."""
    table = dictionary if dictionary is not None else bidirectional(
        _dictionary(cfg.dictionary, "bilingual_demo.tsv"))
    if rng.random() >= cfg.sample_frac:
        return post
    return _substitute(post, table, cfg.word_frac, rng)


def augment_post(post: Post, cfg: AugmentConfig, rng: np.random.Generator) -> Post:
    """Synonym replacement, then masking, then code-switching; each stage sees the previous output."""
    if cfg.synonym.enabled:
        post = synonym_replace(post, cfg.synonym, rng)
    if cfg.masking.enabled:
        post = mask_tokens(post, cfg.masking, rng)
    if cfg.codeswitch.enabled:
        post = codeswitch(post, cfg.codeswitch, rng)
    return post


def augment_corpus(posts: Sequence[Post], cfg: AugmentConfig) -> list[Post]:
    """Augmented copy of every post, each driven by its own derived seed."""
    base = derive_seed(cfg.seed, "augment")
    return [augment_post(p, cfg, np.random.default_rng([base, i])) for i, p in enumerate(posts)]


# --------------------------------------------------------------------------
# back-translation (interface only)


@dataclass(frozen=True)
class BackTranslation:
    post: Post
    alignment_confidence: float


class BackTranslationClient(Protocol):
    def roundtrip(self, post: Post) -> tuple[Post, float]:
        """Translate out and back, transfer labels, report alignment confidence in [0, 1]."""


def backtranslate_stub(post: Post) -> BackTranslation:
    raise NotImplementedError(
        "back-translation needs an external MT service and a word aligner; "
        "call backtranslate(post, client) with a BackTranslationClient")


def backtranslate(post: Post, client: BackTranslationClient) -> BackTranslation:
    out, confidence = client.roundtrip(post)
    if out.gold is not None and len(out.gold) != len(out.tokens):
        raise ValueError("client returned labels that do not align with its tokens")
    if not 0.0 <= confidence <= 1.0:
        raise ValueError("alignment confidence must lie in [0, 1]")
    return BackTranslation(out, float(confidence))
