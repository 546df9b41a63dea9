"""Explanations for trained labelers and a weakly supervised rationale baseline.

* Integrated gradients over token embeddings.  The scalar being explained
  is the mean per-token toxic probability of the labeler (posterior B+I
  marginals for a CRF head, B+I softmax mass otherwise).
* Attention indicators: tokens whose mean incoming self-attention exceeds
  a threshold.
* ARE: a gate generator plus a post-level classifier trained with only
  post-level labels; the gates are read off as a token rationale.
* Highlight rendering to ANSI or self-contained HTML.
"""

from __future__ import annotations

import enum
import html
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .corpus import Post, TagSequence, tags_from_mask, toxic_runs
from .errors import ConfigError, NonFiniteError, UnsupportedEncoder
from .labeler import model as lab
from .labeler.encoders import EncoderConfig, EncoderKind
from .synth import derive_seed

# --------------------------------------------------------------------------
# integrated gradients


@dataclass(frozen=True)
class AttributionMap:
    tokens: tuple[str, ...]
    scores: np.ndarray
    baseline: str
    steps: int
    f_input: float
    f_baseline: float
    completeness_residual: float

    @property
    def relative_residual(self) -> float:
        gap = abs(self.f_input - self.f_baseline)
        return self.completeness_residual / gap if gap > 0 else self.completeness_residual

    def to_lines(self) -> list[str]:
        lines = [f"F(x)={self.f_input:.9g}", f"F(baseline)={self.f_baseline:.9g}",
                 f"baseline={self.baseline}", f"steps={self.steps}",
                 f"residual={self.completeness_residual:.3e}"]
        lines += [f"{i}\t{tok}\t{s:+.6f}" for i, (tok, s) in enumerate(zip(self.tokens, self.scores))]
        return lines


def path_integral(func: Callable[[np.ndarray], tuple[float, np.ndarray]], x: np.ndarray,
                  baseline: np.ndarray | None = None, steps: int = 50):
    """Midpoint Riemann estimate of ``(x - x') * integral of dF/dx`` along the straight path.

    ``func`` returns ``(F, dF/dx)``.  Returns ``(attributions, F(x), F(x'))``
    with attributions of the same shape as ``x``.
    """
    if steps < 1:
        raise ConfigError("integration steps must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    base = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if base.shape != x.shape:
        raise ValueError(f"baseline shape {base.shape} differs from input shape {x.shape}")
    delta = x - base
    total = np.zeros_like(x)
    for k in range(steps):
        alpha = (k + 0.5) / steps
        _, grad = func(base + alpha * delta)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"non-finite gradient at integration step {k} (alpha={alpha:.4f})",
                                 name=f"step {k}")
        total += grad
    f_x, _ = func(x)
    f_base, _ = func(base)
    return delta * total / steps, float(f_x), float(f_base)


def integrated_gradients(params: lab.LabelerParams, post: Post, steps: int = 50,
                         baseline: np.ndarray | None = None, constrain_bio: bool = True) -> AttributionMap:
    """Per-token attributions (summed over embedding dimensions) for ``post``.

    The default baseline is the all-zero embedding matrix.
    """
    ids = lab._ids(params, params.encode_tokens(post.surfaces))
    X = params.tensors["embedding"][ids]
    attr, f_x, f_base = path_integral(lambda z: lab.toxicity_and_grad(params, z, constrain_bio),
                                      X, baseline, steps)
    per_token = attr.sum(axis=1)
    residual = abs(float(per_token.sum()) - (f_x - f_base))
    return AttributionMap(tuple(post.surfaces), per_token, "zeros" if baseline is None else "custom",
                          steps, f_x, f_base, residual)


# --------------------------------------------------------------------------
# attention indicators


def mean_incoming_attention(params: lab.LabelerParams, token_ids) -> np.ndarray:
    """``abar[j]``: attention received by token j, averaged over heads and query positions."""
    if params.config.kind is not EncoderKind.ATTENTION:
        raise UnsupportedEncoder(f"attention indicators need a self-attention encoder, got {params.config.kind.value}")
    if len(token_ids) == 0:
        return np.zeros(0)
    _, A = lab.encode(params, token_ids)
    return A.mean(axis=(0, 1))


def attention_indicators(params: lab.LabelerParams, post: Post, threshold: float = 0.3) -> frozenset[int]:
    abar = mean_incoming_attention(params, params.encode_tokens(post.surfaces))
    return frozenset(int(j) for j in np.flatnonzero(abar > threshold))


def attention_tags(params: lab.LabelerParams, post: Post, threshold: float = 0.3) -> TagSequence:
    chosen = attention_indicators(params, post, threshold)
    return tags_from_mask([i in chosen for i in range(len(post.tokens))])


# --------------------------------------------------------------------------
# ARE: gated rationale extraction from post-level labels


@dataclass(frozen=True)
class TopK:
    k: int = 1


@dataclass(frozen=True)
class Threshold:
    tau: float = 0.5


class GateMode(str, enum.Enum):
    SOFT_L1 = "soft"          # classifier sees soft gates at inference
    HARD_AT_INFERENCE = "hard"  # gates binarised with the selection rule at inference


@dataclass(frozen=True)
class RationaleConfig:
    lam: float = 0.2
    selection: TopK | Threshold = field(default_factory=Threshold)
    gate_mode: GateMode = GateMode.SOFT_L1
    lr: float = 0.2
    momentum: float = 0.9
    clip_norm: float = 5.0
    epochs: int = 15
    batch_size: int = 16
    seed: int = 42

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("rationale lambda must be >= 0")
        if isinstance(self.selection, TopK) and self.selection.k < 1:
            raise ConfigError("TopK needs k >= 1")
        if isinstance(self.selection, Threshold) and not 0 < self.selection.tau < 1:
            raise ConfigError("threshold tau must lie in (0, 1)")


@dataclass
class AreModel:
    params: lab.LabelerParams  # embedding, encoder, gate.*, cls.*
    losses: list[float]

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else math.nan


def _are_init(cfg: EncoderConfig, vocab: lab.Vocab) -> lab.LabelerParams:
    base = lab.init_params(cfg, vocab)
    tensors = {k: v for k, v in base.tensors.items() if not k.startswith(("emit.", "transitions"))}
    rng = np.random.default_rng(derive_seed(cfg.seed, "are.heads"))
    H = cfg.hidden_dim
    tensors["gate.w"] = rng.uniform(-1, 1, H) / math.sqrt(H)
    tensors["gate.b"] = np.zeros(1)
    tensors["cls.w"] = rng.uniform(-1, 1, cfg.embed_dim) / math.sqrt(cfg.embed_dim)
    tensors["cls.b"] = np.zeros(1)
    return lab.LabelerParams(cfg, tensors, vocab, head="are")


def _are_forward(params: lab.LabelerParams, ids):
    X = params.tensors["embedding"][ids]
    H, _, cache = lab.run_encoder(params, X)
    g = expit(H @ params.tensors["gate.w"] + params.tensors["gate.b"][0])
    return X, H, cache, g


def are_loss_grad(params: lab.LabelerParams, ids, label: int, lam: float):
    """Binary cross-entropy on gate-weighted embeddings plus ``lam * mean(g)``.

    Gates come from the contextual encoder; the classifier only sees the
    sum of ``g_t * x_t``, so closing a gate really removes that token.
    """
    ids = lab._ids(params, ids)
    X, H, cache, g = _are_forward(params, ids)
    T = len(ids)
    pooled = g @ X
    logit = float(pooled @ params.tensors["cls.w"] + params.tensors["cls.b"][0])
    # log(1 + e^z) - y z, computed stably
    loss = float(np.logaddexp(0.0, logit) - label * logit + lam * g.mean())
    dlogit = float(expit(logit)) - label
    dpooled = dlogit * params.tensors["cls.w"]
    dg = X @ dpooled + lam / T
    ds = dg * g * (1.0 - g)
    grads = {"cls.w": dlogit * pooled, "cls.b": np.array([dlogit]),
             "gate.w": H.T @ ds, "gate.b": np.array([ds.sum()])}
    enc_grads, dX = lab.encoder_backward(params, cache, np.outer(ds, params.tensors["gate.w"]))
    grads.update(enc_grads)
    dX = dX + np.outer(g, dpooled)
    d_emb = np.zeros_like(params.tensors["embedding"])
    np.add.at(d_emb, ids, dX)
    grads["embedding"] = d_emb
    return loss, grads


def are_train(posts: Sequence[Post], cfg: RationaleConfig = RationaleConfig(),
              encoder_cfg: EncoderConfig = EncoderConfig(), vocab: lab.Vocab | None = None) -> AreModel:
    """Train gates and classifier from post-level labels (any toxic token => positive)."""
    from .trainer import _clip

    posts = [p for p in posts if p.tokens]
    if not posts:
        raise ValueError("ARE training needs at least one non-empty post")
    vocab = vocab or lab.Vocab.build(p.surfaces for p in posts)
    params = _are_init(replace(encoder_cfg, vocab_size=len(vocab)), vocab)
    data = [(vocab.encode(p.surfaces), int(p.gold is not None and p.is_toxic)) for p in posts]
    rng = np.random.default_rng(derive_seed(cfg.seed, "are.batches"))
    velocity = {k: np.zeros_like(v) for k, v in params.tensors.items()}
    losses = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(data))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            acc = {k: np.zeros_like(v) for k, v in params.tensors.items()}
            for i in batch:
                loss, grads = are_loss_grad(params, *data[i], cfg.lam)
                epoch_loss += loss
                for k, gr in grads.items():
                    acc[k] += gr / len(batch)
            _clip(acc, cfg.clip_norm)
            for k, gr in acc.items():
                velocity[k] = cfg.momentum * velocity[k] - cfg.lr * gr
                params.tensors[k] += velocity[k]
        losses.append(epoch_loss / len(data))
    return AreModel(params, losses)


def are_objective(model: AreModel, posts: Sequence[Post], lam: float) -> float:
    """Mean training objective of ``model`` on ``posts`` at sparsity ``lam``."""
    vocab = model.params.vocab
    vals = [are_loss_grad(model.params, vocab.encode(p.surfaces), int(p.is_toxic), lam)[0]
            for p in posts if p.tokens]
    return float(np.mean(vals))


def are_gates(model: AreModel, post: Post) -> np.ndarray:
    if not post.tokens:
        return np.zeros(0)
    ids = lab._ids(model.params, model.params.vocab.encode(post.surfaces))
    return _are_forward(model.params, ids)[3]


def select(gates: np.ndarray, selection: TopK | Threshold) -> np.ndarray:
    if isinstance(selection, TopK):
        keep = np.zeros(len(gates), dtype=bool)
        # stable: ties go to the earlier token
        keep[np.argsort(-gates, kind="stable")[:selection.k]] = True
        return keep
    return gates > selection.tau


def gates_to_tags(gates: Sequence[float], selection: TopK | Threshold = Threshold()) -> TagSequence:
    return tags_from_mask(select(np.asarray(gates, dtype=np.float64), selection).tolist())


def are_extract(model: AreModel, post: Post, cfg: RationaleConfig = RationaleConfig()) -> TagSequence:
    """Hard rationale as BIO tags; valid by construction."""
    return gates_to_tags(are_gates(model, post), cfg.selection)


def are_classify(model: AreModel, post: Post, cfg: RationaleConfig = RationaleConfig()) -> float:
    """Post-level toxic probability; gates are hardened first in ``HARD_AT_INFERENCE`` mode."""
    if not post.tokens:
        return float(expit(model.params.tensors["cls.b"][0]))
    ids = lab._ids(model.params, model.params.vocab.encode(post.surfaces))
    X, _, _, g = _are_forward(model.params, ids)
    if cfg.gate_mode is GateMode.HARD_AT_INFERENCE:
        g = select(g, cfg.selection).astype(np.float64)
    pooled = g @ X
    return float(expit(pooled @ model.params.tensors["cls.w"] + model.params.tensors["cls.b"][0]))


# --------------------------------------------------------------------------
# rendering

N_BUCKETS = 5
ANSI_RESET = "\x1b[0m"
ANSI_SPAN = "\x1b[1;31m"
ANSI_BUCKETS = ("", "\x1b[33m", "\x1b[1;33m", "\x1b[31m", "\x1b[1;31m")
HTML_SPAN = "background:#e53935;color:#ffffff"


def buckets(scores: Sequence[float]) -> list[int]:
    """Intensity 0..4 from equal-width bins spanning ``[min, max]`` of the scores."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        return []
    lo, hi = float(s.min()), float(s.max())
    if hi == lo:
        return [0] * s.size
    return [min(N_BUCKETS - 1, int(math.floor(N_BUCKETS * (v - lo) / (hi - lo)))) for v in s]


def _rtl(text: str) -> bool:
    return any("؀" <= c <= "ۿ" or "ݐ" <= c <= "ݿ" or "ﭐ" <= c <= "﷿"
               or "ﹰ" <= c <= "﻿" for c in text)


def _regions(post: Post, marks) -> list[tuple[int, int, int]]:
    """Character regions ``(start, end, level)`` from tags or an attribution map."""
    toks = post.tokens
    if isinstance(marks, AttributionMap):
        return [(toks[i].char_start, toks[i].char_end, b)
                for i, b in enumerate(buckets(marks.scores)) if b > 0]
    labels = list(marks)
    if len(labels) != len(toks):
        raise ValueError("tags and tokens differ in length")
    return [(toks[a].char_start, toks[b - 1].char_end, -1) for a, b in toxic_runs(labels)]


def _html_style(level: int) -> str:
    if level < 0:
        return HTML_SPAN
    return f"background:rgba(229,57,53,{0.25 * level:.2f})"


def render_line(post: Post, marks, fmt: str = "ansi") -> str:
    """One post with highlighted regions; ``marks`` is a tag sequence or an AttributionMap."""
    text = post.normalized_text
    pieces, pos = [], 0
    esc = html.escape if fmt == "html" else (lambda s: s)
    for start, end, level in _regions(post, marks):
        pieces.append(esc(text[pos:start]))
        if fmt == "html":
            pieces.append(f'<span style="{_html_style(level)}">{esc(text[start:end])}</span>')
        else:
            code = ANSI_SPAN if level < 0 else ANSI_BUCKETS[level]
            pieces.append(f"{code}{text[start:end]}{ANSI_RESET}")
        pos = end
    pieces.append(esc(text[pos:]))
    body = "".join(pieces)
    if fmt == "html":
        direction = "rtl" if _rtl(text) else "ltr"
        return f'<p dir="{direction}"><b>{esc(post.id)}</b>: {body}</p>'
    return body


def render_highlights(post: Post, marks, fmt: str = "ansi") -> str:
    """Single-post report: ANSI text, or a complete HTML document."""
    if fmt == "html":
        return render_report([post], [marks], fmt)
    return render_line(post, marks, fmt)


def render_report(posts: Sequence[Post], marks: Sequence, fmt: str = "ansi") -> str:
    if fmt not in ("ansi", "html"):
        raise ValueError(f"unknown highlight format {fmt!r}")
    lines = [render_line(p, m, fmt) for p, m in zip(posts, marks)]
    if fmt == "ansi":
        return "\n".join(lines) + ("\n" if lines else "")
    return ("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>toxic span report</title>\n"
            "<style>body{font-family:sans-serif;line-height:1.8}"
            "p[dir=rtl]{font-family:'Noto Nastaliq Urdu','Jameel Noori Nastaleeq',serif}</style>\n"
            "</head>\n<body>\n" + "\n".join(lines) + "\n</body>\n</html>\n")
