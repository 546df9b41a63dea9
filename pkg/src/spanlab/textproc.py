"""Offset-preserving normalization, tokenization and near-duplicate removal.

Every pipeline step works on a *tracked* string: the text plus, for each
output character, the index of the input character it came from.  That
mapping is what lets gold spans annotated on raw text survive NFC
composition, URL removal or transliteration.
"""

from __future__ import annotations

import enum
import functools
import re
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Sequence

from .errors import ConfigError


class Domain(str, enum.Enum):
    SOCIAL_MEDIA = "SocialMedia"
    NEWS = "News"
    YOUTUBE = "YouTube"
    OTHER = "Other"

    @classmethod
    def parse(cls, name: str) -> "Domain":
        key = name.strip().lower().replace("_", "").replace("-", "")
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ValueError(f"unknown domain {name!r}; expected one of {[m.value for m in cls]}")

    def __str__(self) -> str:
        return self.value


class Step(str, enum.Enum):
    UNICODE_NFC = "UnicodeNFC"
    DIACRITIC_STRIP = "DiacriticStrip"
    ROMAN_TO_NASTALIQ = "RomanToNastaliq"
    NOISE_REMOVAL = "NoiseRemoval"
    WHITESPACE_NORM = "WhitespaceNorm"
    WORD_SEGMENTATION = "WordSegmentation"

    @classmethod
    def parse(cls, name: str) -> "Step":
        for member in cls:
            if member.value.lower() == name.strip().lower():
                return member
        raise ValueError(f"unknown pipeline step {name!r}")


ALL_STEPS = tuple(Step)

# Noise and segmentation work on the Roman input, so they run before
# transliteration; whitespace is tidied last.
DEFAULT_STEPS = (Step.UNICODE_NFC, Step.NOISE_REMOVAL, Step.WORD_SEGMENTATION, Step.DIACRITIC_STRIP,
                 Step.ROMAN_TO_NASTALIQ, Step.WHITESPACE_NORM)

# Arabic-script harakat and honorific marks; madda/hamza (U+0653..U+0655)
# are letters-forming in Urdu and are kept.
DEFAULT_DIACRITIC_RANGES = (
    (0x0610, 0x061A),
    (0x064B, 0x0652),
    (0x0656, 0x065F),
    (0x0670, 0x0670),
    (0x06D6, 0x06ED),
)


@dataclass(frozen=True)
class RawText:
    content: str
    source_id: str = ""
    domain: Domain = Domain.OTHER


class Token(NamedTuple):
    surface: str
    char_start: int
    char_end: int


@dataclass(frozen=True)
class PipelineConfig:
    """Ordered preprocessing steps plus the rule tables they need.

    ``transliteration_table=None`` selects the bundled demo table; the
    segmentation table defaults to no rules at all.
    """

    steps: tuple[Step, ...] = DEFAULT_STEPS
    transliteration_table: str | None = None
    segmentation_table: str | None = None
    diacritic_ranges: tuple[tuple[int, int], ...] = DEFAULT_DIACRITIC_RANGES
    max_rounds: int = field(default=4, compare=False)

    def __post_init__(self):
        steps = tuple(Step.parse(s) if isinstance(s, str) else s for s in self.steps)
        if len(set(steps)) != len(steps):
            raise ConfigError("pipeline steps must not repeat")
        object.__setattr__(self, "steps", steps)
        for lo, hi in self.diacritic_ranges:
            if lo > hi:
                raise ConfigError(f"bad diacritic range {lo:#x}-{hi:#x}")

    def transliteration_rules(self) -> tuple[tuple[str, str], ...]:
        if self.transliteration_table is None:
            return load_rules(str(_data_path("translit_demo.tsv")))
        return load_rules(self.transliteration_table)

    def segmentation_rules(self) -> tuple[tuple[str, str], ...]:
        if self.segmentation_table is None:
            return ()
        return load_rules(self.segmentation_table, require_space=True)


def _data_path(name: str) -> Path:
    return Path(str(resources.files("spanlab") / "data" / name))


@functools.lru_cache(maxsize=32)
def load_rules(path: str, require_space: bool = False) -> tuple[tuple[str, str], ...]:
    """Read a ``source<TAB>replacement`` rule file.

    Rules come back sorted longest source first (ties lexicographic), which
    is the order :func:`transliterate_roman` consumes them in.
    """
    rules: dict[str, str] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except UnicodeDecodeError as exc:
        raise ConfigError(f"rule file is not UTF-8: {exc}", path=path) from None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ConfigError("expected exactly one TAB between source and replacement", path, lineno)
        src, dst = parts[0].strip(), unicodedata.normalize("NFC", parts[1].strip())
        if not src or not dst:
            raise ConfigError("empty source or replacement", path, lineno)
        if any(c.isspace() for c in src):
            raise ConfigError("source pattern must not contain whitespace", path, lineno)
        if require_space and " " not in dst:
            raise ConfigError("segmentation output must contain a space", path, lineno)
        if require_space and dst.replace(" ", "") != src:
            raise ConfigError("segmentation may only insert spaces", path, lineno)
        key = src.lower() if not require_space else src
        if key in rules:
            raise ConfigError(f"duplicate rule for {src!r}", path, lineno)
        rules[key] = dst
    return tuple(sorted(rules.items(), key=lambda kv: (-len(kv[0]), kv[0])))


# --------------------------------------------------------------------------
# tracked-string steps


class _Tracked(NamedTuple):
    text: str
    origins: tuple[int, ...]


def _nfc(tr: _Tracked) -> _Tracked:
    if unicodedata.is_normalized("NFC", tr.text):
        return tr
    # Chunks start at characters that cannot compose with what precedes them,
    # so NFC of the concatenation equals the concatenation of chunk NFCs.
    chunks: list[tuple[int, int]] = []
    start = 0
    for i in range(1, len(tr.text)):
        c = tr.text[i]
        if unicodedata.combining(c):
            continue
        head = unicodedata.normalize("NFC", tr.text[start:i])
        last = head[-1] if head else ""
        if last and unicodedata.normalize("NFC", last + c) != last + c:
            continue
        chunks.append((start, i))
        start = i
    chunks.append((start, len(tr.text)))
    out: list[str] = []
    origins: list[int] = []
    for a, b in chunks:
        piece = unicodedata.normalize("NFC", tr.text[a:b])
        out.append(piece)
        origins.extend([tr.origins[a]] * len(piece))
    text = "".join(out)
    if text != unicodedata.normalize("NFC", tr.text):
        text = unicodedata.normalize("NFC", tr.text)
        origins = [tr.origins[0]] * len(text)
    return _Tracked(text, tuple(origins))


def _strip_diacritics(tr: _Tracked, ranges) -> _Tracked:
    keep = [
        i for i, c in enumerate(tr.text)
        if not any(lo <= ord(c) <= hi for lo, hi in ranges)
    ]
    if len(keep) == len(tr.text):
        return tr
    return _Tracked("".join(tr.text[i] for i in keep), tuple(tr.origins[i] for i in keep))


def _rewrite(tr: _Tracked, rules: Sequence[tuple[str, str]]) -> _Tracked:
    if not rules or not tr.text:
        return tr
    table = dict(rules)
    lengths = sorted({len(k) for k in table}, reverse=True)
    low = tr.text.lower()
    aligned = len(low) == len(tr.text)
    out: list[str] = []
    origins: list[int] = []
    i, n = 0, len(tr.text)
    while i < n:
        for size in lengths:
            if i + size > n:
                continue
            window = low[i:i + size] if aligned else tr.text[i:i + size].lower()
            repl = table.get(window)
            if repl is not None:
                out.append(repl)
                origins.extend([tr.origins[i]] * len(repl))
                i += size
                break
        else:
            out.append(tr.text[i])
            origins.append(tr.origins[i])
            i += 1
    return _Tracked("".join(out), tuple(origins))


_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_EMAIL_RE = re.compile(r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+")


def _is_punct(c: str) -> bool:
    return unicodedata.category(c).startswith("P")


def _remove_noise(tr: _Tracked) -> _Tracked:
    while True:
        drop: set[int] = set()
        for rx in (_URL_RE, _EMAIL_RE):
            for m in rx.finditer(tr.text):
                drop.update(range(m.start(), m.end()))
        if not drop:
            break
        keep = [i for i in range(len(tr.text)) if i not in drop]
        tr = _Tracked("".join(tr.text[i] for i in keep), tuple(tr.origins[i] for i in keep))
    # Repeated punctuation ("!!!", "؟؟") collapses to one mark.
    keep = [
        i for i, c in enumerate(tr.text)
        if not (i > 0 and _is_punct(c) and tr.text[i - 1] == c)
    ]
    if len(keep) == len(tr.text):
        return tr
    return _Tracked("".join(tr.text[i] for i in keep), tuple(tr.origins[i] for i in keep))


def _normalize_whitespace(tr: _Tracked) -> _Tracked:
    out: list[str] = []
    origins: list[int] = []
    pending: int | None = None
    for c, o in zip(tr.text, tr.origins):
        if c.isspace():
            if pending is None:
                pending = o
            continue
        if pending is not None and out:
            out.append(" ")
            origins.append(pending)
        pending = None
        out.append(c)
        origins.append(o)
    return _Tracked("".join(out), tuple(origins))


def _segment(tr: _Tracked, rules: Sequence[tuple[str, str]]) -> _Tracked:
    if not rules:
        return tr
    table = dict(rules)
    for _ in range(len(tr.text) + 1):
        out: list[str] = []
        origins: list[int] = []
        changed = False
        for m in re.finditer(r"\S+|\s+", tr.text):
            word = m.group()
            src = tr.origins[m.start():m.end()]
            repl = table.get(word)
            if repl is None:
                out.append(word)
                origins.extend(src)
                continue
            changed = True
            k = 0
            for c in repl:
                if c == " ":
                    origins.append(src[max(k - 1, 0)])
                else:
                    origins.append(src[k])
                    k += 1
            out.append(repl)
        tr = _Tracked("".join(out), tuple(origins))
        if not changed:
            break
    return tr


def _apply(tr: _Tracked, cfg: PipelineConfig) -> _Tracked:
    for step in cfg.steps:
        if step is Step.UNICODE_NFC:
            tr = _nfc(tr)
        elif step is Step.DIACRITIC_STRIP:
            tr = _strip_diacritics(tr, cfg.diacritic_ranges)
        elif step is Step.ROMAN_TO_NASTALIQ:
            tr = _rewrite(tr, cfg.transliteration_rules())
        elif step is Step.NOISE_REMOVAL:
            tr = _remove_noise(tr)
        elif step is Step.WHITESPACE_NORM:
            tr = _normalize_whitespace(tr)
        elif step is Step.WORD_SEGMENTATION:
            tr = _segment(tr, cfg.segmentation_rules())
    return tr


def normalize(raw: RawText | str, cfg: PipelineConfig | None = None) -> tuple[str, tuple[int, ...]]:
    """Run the configured steps; return normalized text and its offset map.

    ``offset_map[i]`` is the index in the raw content of the character that
    produced normalized character ``i``.  The pipeline is re-applied until
    the text is stable (at most ``cfg.max_rounds`` passes), which makes the
    result idempotent even when one step exposes work for an earlier one.
    """
    cfg = cfg or PipelineConfig()
    content = raw.content if isinstance(raw, RawText) else raw
    tr = _Tracked(content, tuple(range(len(content))))
    for _ in range(max(cfg.max_rounds, 1)):
        nxt = _apply(tr, cfg)
        if nxt.text == tr.text:
            return nxt.text, nxt.origins
        tr = nxt
    return tr.text, tr.origins


def original_span(offset_map: Sequence[int], start: int, end: int, raw: str) -> tuple[int, int]:
    """Map a normalized ``[start, end)`` region back onto ``raw``.

    The region runs to the end of the raw word holding the last mapped
    character, so text removed after it (a URL, repeated punctuation
    beyond a space) is not swept in.
    """
    if start >= end:
        raise ValueError("empty span")
    lo = offset_map[start]
    bound = offset_map[end] if end < len(offset_map) else len(raw)
    hi = offset_map[end - 1] + 1
    while hi < bound and not raw[hi].isspace():
        hi += 1
    return lo, hi


def transliterate_roman(text: str, table: Sequence[tuple[str, str]]) -> str:
    """Left-to-right, longest-match-first rule rewriting.

    Matching ignores case. Characters no rule covers pass through unchanged.
    """
    return _rewrite(_Tracked(text, tuple(range(len(text)))), table).text


def tokenize(normalized_text: str) -> list[Token]:
    """Whitespace word tokenization; each punctuation character is its own token."""
    tokens: list[Token] = []
    start = None
    for i, c in enumerate(normalized_text):
        if c.isspace() or _is_punct(c):
            if start is not None:
                tokens.append(Token(normalized_text[start:i], start, i))
                start = None
            if not c.isspace():
                tokens.append(Token(c, i, i + 1))
        elif start is None:
            start = i
    if start is not None:
        tokens.append(Token(normalized_text[start:], start, len(normalized_text)))
    return tokens


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def similarity(a: str, b: str) -> float:
    """``1 - editdistance / max_len``; two empty strings are identical."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def dedup(posts: Sequence, threshold: float = 0.8) -> list:
    """Keep each post unless it is at least ``threshold`` similar to an earlier kept one."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    kept: list = []
    for post in posts:
        text = post.normalized_text
        if all(similarity(text, k.normalized_text) < threshold for k in kept):
            kept.append(post)
    return kept
