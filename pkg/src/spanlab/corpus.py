"""BIO-annotated posts: data model, file formats, spans, splits and statistics.

Token-per-line format (UTF-8)::

    #id post-17
    #domain SocialMedia
    tum<TAB>0<TAB>3<TAB>O
    bewakoof<TAB>4<TAB>12<TAB>B-TOXIC[<TAB>annotator2 label ...]

Posts are separated by a blank line.  An optional ``#category <name>``
header carries the toxicity category used for breakdowns.  The label
column may be omitted for every token of a post (unlabeled input).
"""

from __future__ import annotations

import enum
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CorpusFormatError, SplitError
from .textproc import Domain, PipelineConfig, RawText, Token, normalize, tokenize


class BioLabel(enum.IntEnum):
    O = 0
    B_TOXIC = 1
    I_TOXIC = 2

    @property
    def tag(self) -> str:
        return _TAG_NAMES[self]

    @classmethod
    def parse(cls, text: str) -> "BioLabel":
        try:
            return _TAG_LOOKUP[text]
        except KeyError:
            raise ValueError(f"unknown label {text!r}") from None


_TAG_NAMES = {BioLabel.O: "O", BioLabel.B_TOXIC: "B-TOXIC", BioLabel.I_TOXIC: "I-TOXIC"}
_TAG_LOOKUP = {v: k for k, v in _TAG_NAMES.items()}

O, B, I = BioLabel.O, BioLabel.B_TOXIC, BioLabel.I_TOXIC


def is_valid_bio(labels: Iterable[int]) -> bool:
    """No I-TOXIC at position 0 or directly after O."""
    prev = BioLabel.O
    for i, lab in enumerate(labels):
        if lab == BioLabel.I_TOXIC and (i == 0 or prev == BioLabel.O):
            return False
        prev = lab
    return True


@dataclass(frozen=True)
class TagSequence:
    labels: tuple[BioLabel, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(BioLabel(int(x)) for x in self.labels))

    @classmethod
    def from_tags(cls, tags: Iterable[str]) -> "TagSequence":
        return cls(tuple(BioLabel.parse(t) for t in tags))

    @property
    def valid(self) -> bool:
        return is_valid_bio(self.labels)

    def toxic_mask(self) -> np.ndarray:
        return np.array([lab != BioLabel.O for lab in self.labels], dtype=bool)

    def tags(self) -> list[str]:
        return [lab.tag for lab in self.labels]

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __getitem__(self, idx):
        return self.labels[idx]


def tags_from_mask(mask: Sequence[bool]) -> TagSequence:
    """Selected tokens become B/I by contiguity, everything else O."""
    out = []
    prev = False
    for sel in mask:
        out.append((BioLabel.I_TOXIC if prev else BioLabel.B_TOXIC) if sel else BioLabel.O)
        prev = bool(sel)
    return TagSequence(tuple(out))


@dataclass(frozen=True)
class Post:
    id: str
    domain: Domain
    normalized_text: str
    tokens: tuple[Token, ...]
    gold: TagSequence | None = None
    annotator_labels: dict = field(default_factory=dict, compare=False, hash=False)
    category: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(Token(*t) for t in self.tokens))
        if self.gold is not None and len(self.gold) != len(self.tokens):
            raise ValueError(f"post {self.id}: {len(self.gold)} labels for {len(self.tokens)} tokens")
        for name, seq in self.annotator_labels.items():
            if len(seq) != len(self.tokens):
                raise ValueError(f"post {self.id}: annotator {name} has {len(seq)} labels")

    @property
    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]

    @property
    def is_toxic(self) -> bool:
        """Post-level toxicity: at least one toxic token."""
        return self.gold is not None and any(lab != BioLabel.O for lab in self.gold)

    def with_gold(self, gold: TagSequence | None) -> "Post":
        return Post(self.id, self.domain, self.normalized_text, self.tokens, gold,
                    dict(self.annotator_labels), self.category)


def post_from_raw(raw: RawText, cfg: PipelineConfig | None = None) -> Post:
    text, _ = normalize(raw, cfg)
    return Post(raw.source_id, raw.domain, text, tuple(tokenize(text)))


def text_from_tokens(tokens: Sequence[Token]) -> str:
    """Rebuild normalized text, filling inter-token gaps with spaces."""
    if not tokens:
        return ""
    chars = [" "] * tokens[-1].char_end
    for tok in tokens:
        chars[tok.char_start:tok.char_end] = tok.surface
    return "".join(chars)


# --------------------------------------------------------------------------
# file formats


def load_corpus(path) -> list[Post]:
    return parse_corpus(Path(path).read_text(encoding="utf-8"))


def parse_corpus(text: str) -> list[Post]:
    posts: list[Post] = []
    block: list[tuple[int, str]] = []
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for lineno, line in enumerate(lines, start=1):
        if line.strip() == "":
            if block:
                posts.append(_parse_block(block, len(posts)))
                block = []
            continue
        block.append((lineno, line.rstrip("\r")))
    if block:
        posts.append(_parse_block(block, len(posts)))
    return posts


def _parse_block(block: list[tuple[int, str]], index: int) -> Post:
    post_id, domain, category = f"post-{index}", Domain.OTHER, None
    tokens: list[Token] = []
    columns: list[list[BioLabel]] = []
    width = None
    for lineno, line in block:
        if "\t" not in line:
            if not line.startswith("#"):
                raise CorpusFormatError(f"expected header or TAB-separated token line: {line!r}", lineno)
            key, _, value = line[1:].partition(" ")
            if key == "id":
                post_id = value
            elif key == "domain":
                try:
                    domain = Domain.parse(value)
                except ValueError as exc:
                    raise CorpusFormatError(str(exc), lineno) from None
            elif key == "category":
                category = value or None
            else:
                raise CorpusFormatError(f"unknown header #{key}", lineno)
            continue
        parts = line.split("\t")
        if len(parts) < 3:
            raise CorpusFormatError("token line needs surface, start and end", lineno)
        surface = parts[0]
        try:
            start, end = int(parts[1]), int(parts[2])
        except ValueError:
            raise CorpusFormatError("offsets must be integers", lineno) from None
        if not 0 <= start < end or end - start != len(surface):
            raise CorpusFormatError(f"offsets [{start}, {end}) do not fit surface {surface!r}", lineno)
        if tokens and start < tokens[-1].char_end:
            raise CorpusFormatError("tokens overlap or are out of order", lineno)
        n_labels = len(parts) - 3
        if width is None:
            width = n_labels
            columns = [[] for _ in range(n_labels)]
        elif n_labels != width:
            raise CorpusFormatError(
                f"token has {n_labels} label column(s), earlier tokens have {width}", lineno)
        for col, raw in zip(columns, parts[3:]):
            try:
                col.append(BioLabel.parse(raw))
            except ValueError as exc:
                raise CorpusFormatError(str(exc), lineno) from None
        tokens.append(Token(surface, start, end))
    gold = TagSequence(tuple(columns[0])) if columns else None
    annotators = {f"ann{k + 2}": TagSequence(tuple(col)) for k, col in enumerate(columns[1:])}
    return Post(post_id, domain, text_from_tokens(tokens), tuple(tokens), gold, annotators, category)


def format_corpus(posts: Sequence[Post]) -> str:
    blocks = []
    for post in posts:
        lines = [f"#id {post.id}", f"#domain {post.domain.value}"]
        if post.category:
            lines.append(f"#category {post.category}")
        extra = [post.annotator_labels[k] for k in sorted(post.annotator_labels, key=_annotator_key)]
        for i, tok in enumerate(post.tokens):
            cols = [tok.surface, str(tok.char_start), str(tok.char_end)]
            if post.gold is not None:
                cols.append(post.gold[i].tag)
                cols.extend(seq[i].tag for seq in extra)
            lines.append("\t".join(cols))
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks)


def _annotator_key(name: str):
    digits = "".join(c for c in name if c.isdigit())
    return (int(digits) if digits else 0, name)


def save_corpus(posts: Sequence[Post], path) -> None:
    Path(path).write_text(format_corpus(posts), encoding="utf-8")


def load_raw_jsonl(path) -> list[RawText]:
    """JSON-lines raw posts: one ``{"id", "domain", "text"}`` object per line."""
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            out.append(RawText(str(obj["text"]), str(obj.get("id", f"raw-{lineno}")),
                               Domain.parse(str(obj.get("domain", "Other")))))
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            raise CorpusFormatError(f"bad JSON-lines record: {exc}", lineno) from None
    return out


# --------------------------------------------------------------------------
# spans


def toxic_runs(labels: Sequence[int]) -> list[tuple[int, int]]:
    """Maximal ``[start, end)`` token runs labeled B or I (orphan I starts a run)."""
    runs = []
    start = None
    for i, lab in enumerate(labels):
        if lab != BioLabel.O:
            if start is None:
                start = i
        elif start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(labels)))
    return runs


def spans_from_tags(tokens: Sequence[Token], tags: TagSequence | Sequence[int]) -> frozenset[int]:
    """Character offsets covered by toxic token runs, interior gaps included."""
    if len(tokens) != len(tags):
        raise ValueError("tokens and tags differ in length")
    offsets: set[int] = set()
    for a, b in toxic_runs(list(tags)):
        offsets.update(range(tokens[a].char_start, tokens[b - 1].char_end))
    return frozenset(offsets)


# --------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.8
    dev_frac: float = 0.1
    test_frac: float = 0.1
    stratify_on: tuple[str, ...] = ("toxicity", "domain")
    seed: int = 42

    def __post_init__(self):
        total = self.train_frac + self.dev_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions sum to {total}, not 1")
        if min(self.train_frac, self.dev_frac, self.test_frac) < 0:
            raise ValueError("split fractions must be non-negative")
        bad = set(self.stratify_on) - {"toxicity", "domain"}
        if bad:
            raise ValueError(f"cannot stratify on {sorted(bad)}")


def _cell_key(post: Post, spec: SplitSpec) -> tuple:
    key = []
    if "domain" in spec.stratify_on:
        key.append(post.domain.value)
    if "toxicity" in spec.stratify_on:
        key.append("toxic" if post.is_toxic else "non-toxic")
    return tuple(key)


def _allocate(n: int, fracs: Sequence[float]) -> list[int]:
    # Largest remainder keeps every part within one item of n * frac.
    raw = [n * f for f in fracs]
    counts = [math.floor(x) for x in raw]
    order = sorted(range(len(fracs)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def stratified_split(posts: Sequence[Post], spec: SplitSpec = SplitSpec()):
    """Partition into (train, dev, test) preserving every stratification cell's proportions."""
    cells: dict[tuple, list[int]] = {}
    for idx, post in enumerate(posts):
        cells.setdefault(_cell_key(post, spec), []).append(idx)
    rng = np.random.default_rng(spec.seed)
    parts: list[list[int]] = [[], [], []]
    for key in sorted(cells):
        members = cells[key]
        if len(members) < 3:
            raise SplitError(f"stratification cell {'/'.join(key) or 'all'} has {len(members)} post(s); need >= 3")
        order = [members[i] for i in rng.permutation(len(members))]
        n_train, n_dev, _ = _allocate(len(members), (spec.train_frac, spec.dev_frac, spec.test_frac))
        parts[0].extend(order[:n_train])
        parts[1].extend(order[n_train:n_train + n_dev])
        parts[2].extend(order[n_train + n_dev:])
    return tuple([posts[i] for i in sorted(p)] for p in parts)


# --------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class DomainCount:
    samples: int
    toxic_pct: float
    non_toxic_pct: float


@dataclass(frozen=True)
class CorpusStats:
    n_posts: int
    per_domain: dict
    post_length: tuple[float, int, int]
    span_length: tuple[float, int, int]
    n_spans: int
    toxic_token_fraction: tuple[float, float, float]
    multi_span_fraction: float
    label_counts: dict
    label_distribution: dict

    def to_lines(self) -> list[str]:
        lines = [f"n_posts={self.n_posts}"]
        for dom, c in self.per_domain.items():
            lines.append(f"domain.{dom}.samples={c.samples}")
            lines.append(f"domain.{dom}.toxic_pct={c.toxic_pct:.4f}")
            lines.append(f"domain.{dom}.non_toxic_pct={c.non_toxic_pct:.4f}")
        for name, (mean, lo, hi) in (("post_length", self.post_length),
                                     ("span_length", self.span_length),
                                     ("toxic_token_fraction", self.toxic_token_fraction)):
            lines.append(f"{name}.mean={mean:.6g}")
            lines.append(f"{name}.min={lo:.6g}")
            lines.append(f"{name}.max={hi:.6g}")
        lines.append(f"n_spans={self.n_spans}")
        lines.append(f"multi_span_fraction={self.multi_span_fraction:.6g}")
        for lab in BioLabel:
            lines.append(f"label.{lab.tag}.count={self.label_counts[lab.tag]}")
            lines.append(f"label.{lab.tag}.fraction={self.label_distribution[lab.tag]:.6g}")
        return lines


def _summary(values: Sequence[float]):
    if not values:
        return (0.0, 0, 0)
    return (float(np.mean(values)), min(values), max(values))


def label_counts(posts: Iterable[Post]) -> dict[BioLabel, int]:
    counts = Counter()
    for post in posts:
        if post.gold is not None:
            counts.update(post.gold.labels)
    return {lab: counts.get(lab, 0) for lab in BioLabel}


def compute_stats(posts: Sequence[Post]) -> CorpusStats:
    per_domain = {}
    for dom in sorted({p.domain for p in posts}, key=lambda d: list(Domain).index(d)):
        members = [p for p in posts if p.domain is dom]
        toxic = sum(p.is_toxic for p in members)
        per_domain[dom.value] = DomainCount(
            len(members), 100.0 * toxic / len(members), 100.0 * (len(members) - toxic) / len(members))
    lengths = [len(p.tokens) for p in posts]
    span_lengths: list[int] = []
    fractions: list[float] = []
    multi = 0
    labelled = 0
    for p in posts:
        if p.gold is None:
            continue
        labelled += 1
        runs = toxic_runs(p.gold.labels)
        span_lengths.extend(b - a for a, b in runs)
        multi += len(runs) > 1
        if runs:
            fractions.append(sum(b - a for a, b in runs) / len(p.tokens))
    counts = label_counts(posts)
    total = sum(counts.values())
    return CorpusStats(
        n_posts=len(posts),
        per_domain=per_domain,
        post_length=_summary(lengths),
        span_length=_summary(span_lengths),
        n_spans=len(span_lengths),
        toxic_token_fraction=_summary(fractions),
        multi_span_fraction=multi / labelled if labelled else 0.0,
        label_counts={lab.tag: n for lab, n in counts.items()},
        label_distribution={lab.tag: (n / total if total else 0.0) for lab, n in counts.items()},
    )
