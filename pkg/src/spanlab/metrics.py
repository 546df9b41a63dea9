"""Span-level (character offset) and token-level evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from .corpus import BioLabel, Post, TagSequence, is_valid_bio, spans_from_tags


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    def __iter__(self):
        return iter((self.precision, self.recall, self.f1))


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def span_prf(pred, gold) -> PRF:
    """Per-post precision/recall/F1 on sets of character offsets.

    Both empty counts as perfect; exactly one empty scores 0.
    """
    pred, gold = set(pred), set(gold)
    if not pred and not gold:
        return PRF(1.0, 1.0, 1.0)
    if not pred or not gold:
        return PRF(0.0, 0.0, 0.0)
    hit = len(pred & gold)
    p, r = hit / len(pred), hit / len(gold)
    return PRF(p, r, _f1(p, r))


def corpus_span_f1(preds: Sequence, golds: Sequence) -> PRF:
    """Macro average of per-post span scores."""
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions for {len(golds)} gold posts")
    if not golds:
        return PRF(1.0, 1.0, 1.0)
    scores = [span_prf(p, g) for p, g in zip(preds, golds)]
    n = len(scores)
    return PRF(sum(s.precision for s in scores) / n, sum(s.recall for s in scores) / n,
               sum(s.f1 for s in scores) / n)


@dataclass(frozen=True)
class TokenPRF(PRF):
    tp: int = 0
    fp: int = 0
    fn: int = 0
    degenerate: bool = False


def token_prf(pred_tags: Sequence[Sequence[int]], gold_tags: Sequence[Sequence[int]]) -> TokenPRF:
    """Micro-averaged binary toxic (B or I) scores over every token.

    Accepts either a single pair of sequences' worth of labels per post or
    a flat pair; the counts are summed over all posts.
    """
    if len(pred_tags) != len(gold_tags):
        raise ValueError("prediction and gold lists differ in length")
    if pred_tags and not hasattr(pred_tags[0], "__len__"):
        pred_tags, gold_tags = [pred_tags], [gold_tags]
    tp = fp = fn = 0
    for pred, gold in zip(pred_tags, gold_tags):
        if len(pred) != len(gold):
            raise ValueError("a prediction and its gold sequence differ in length")
        for p, g in zip(pred, gold):
            pt, gt = int(p) != BioLabel.O, int(g) != BioLabel.O
            tp += pt and gt
            fp += pt and not gt
            fn += gt and not pt
    if tp + fp + fn == 0:
        return TokenPRF(1.0, 1.0, 1.0, 0, 0, 0, True)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return TokenPRF(p, r, _f1(p, r), tp, fp, fn, False)


def per_class_prf(pred_tags, gold_tags) -> dict[str, PRF]:
    """One-vs-rest scores for each BIO class, micro over tokens."""
    out = {}
    for lab in BioLabel:
        tp = fp = fn = 0
        for pred, gold in zip(pred_tags, gold_tags):
            for p, g in zip(pred, gold):
                tp += int(p) == lab and int(g) == lab
                fp += int(p) == lab and int(g) != lab
                fn += int(p) != lab and int(g) == lab
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        out[lab.tag] = PRF(p, r, _f1(p, r))
    return out


def invalid_bio_rate(sequences: Sequence[Sequence[int]]) -> float:
    if not sequences:
        return 0.0
    return sum(not is_valid_bio(s) for s in sequences) / len(sequences)


@dataclass(frozen=True)
class EvalReport:
    span_p: float
    span_r: float
    span_f1: float
    token_p: float
    token_r: float
    token_f1: float
    invalid_bio_rate: float
    n_posts: int
    token_f1_degenerate: bool = False
    per_class: dict = field(default_factory=dict)

    def to_lines(self, prefix: str = "") -> list[str]:
        keys = ("span_p", "span_r", "span_f1", "token_p", "token_r", "token_f1", "invalid_bio_rate")
        lines = [f"{prefix}{k}={getattr(self, k):.6f}" for k in keys]
        lines.append(f"{prefix}n_posts={self.n_posts}")
        if self.token_f1_degenerate:
            lines.append(f"{prefix}token_f1_note=no_toxic_tokens")
        for tag, prf in self.per_class.items():
            lines.append(f"{prefix}class.{tag}.p={prf.precision:.6f}")
            lines.append(f"{prefix}class.{tag}.r={prf.recall:.6f}")
            lines.append(f"{prefix}class.{tag}.f1={prf.f1:.6f}")
        return lines


def evaluate(gold_posts: Sequence[Post], pred_tags: Sequence[TagSequence | Sequence[int]],
             per_class: bool = False) -> EvalReport:
    if len(gold_posts) != len(pred_tags):
        raise ValueError(f"{len(pred_tags)} predictions for {len(gold_posts)} posts")
    golds = [list(p.gold) for p in gold_posts]
    preds = [list(t) for t in pred_tags]
    span = corpus_span_f1([spans_from_tags(p.tokens, t) for p, t in zip(gold_posts, preds)],
                          [spans_from_tags(p.tokens, g) for p, g in zip(gold_posts, golds)])
    tok = token_prf(preds, golds)
    return EvalReport(span.precision, span.recall, span.f1, tok.precision, tok.recall, tok.f1,
                      invalid_bio_rate(preds), len(gold_posts), tok.degenerate,
                      per_class_prf(preds, golds) if per_class else {})


def _group_of(key: str | Callable) -> Callable[[Post], str]:
    if callable(key):
        return key
    if key == "domain":
        return lambda p: p.domain.value
    if key == "category":
        return lambda p: p.category or "Other"
    raise ValueError(f"unknown grouping key {key!r}")


def breakdown(gold_posts: Sequence[Post], pred_tags, key="domain", per_class: bool = False) -> dict[str, EvalReport]:
    """Per-group reports; posts lacking the attribute fall into ``Other``."""
    group = _group_of(key)
    buckets: dict[str, list[int]] = {}
    for i, post in enumerate(gold_posts):
        buckets.setdefault(group(post) or "Other", []).append(i)
    return {
        name: evaluate([gold_posts[i] for i in idx], [pred_tags[i] for i in idx], per_class)
        for name, idx in sorted(buckets.items())
    }


def format_table(rows: dict[str, EvalReport]) -> str:
    header = f"{'group':<14}{'n':>6}{'span_P':>9}{'span_R':>9}{'span_F1':>9}{'tok_P':>9}{'tok_R':>9}{'tok_F1':>9}{'invalid':>9}"
    lines = [header]
    for name, r in rows.items():
        lines.append(f"{name:<14}{r.n_posts:>6}{r.span_p:>9.4f}{r.span_r:>9.4f}{r.span_f1:>9.4f}"
                     f"{r.token_p:>9.4f}{r.token_r:>9.4f}{r.token_f1:>9.4f}{r.invalid_bio_rate:>9.4f}")
    return "\n".join(lines)
