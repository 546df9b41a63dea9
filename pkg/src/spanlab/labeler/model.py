"""Embeddings + encoder + emission projection + CRF/softmax head."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import softmax

from ..corpus import BioLabel, TagSequence
from ..errors import NonFiniteError
from . import crf
from .encoders import Attention, EncoderConfig, EncoderKind, Recurrent, _uniform
from .losses import LossConfig, LossKind, focal_loss_grad, softmax_nll_grad

UNK, MASK = 0, 1
SPECIALS = ("[UNK]", "[MASK]")
PARAMS_VERSION = 1


@dataclass(frozen=True)
class Vocab:
    """Surface -> index map; index 0 is UNK and 1 is the mask token."""

    words: tuple[str, ...]
    index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if tuple(self.words[:2]) != SPECIALS:
            raise ValueError("vocabulary must start with [UNK], [MASK]")
        object.__setattr__(self, "index", {w: i for i, w in enumerate(self.words)})

    @classmethod
    def build(cls, token_lists: Iterable[Sequence[str]], min_count: int = 1) -> "Vocab":
        counts: dict[str, int] = {}
        for toks in token_lists:
            for w in toks:
                counts[w] = counts.get(w, 0) + 1
        kept = sorted(w for w, n in counts.items() if n >= min_count and w not in SPECIALS)
        return cls(SPECIALS + tuple(kept))

    def encode(self, surfaces: Sequence[str]) -> np.ndarray:
        return np.array([self.index.get(s, UNK) for s in surfaces], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.words)


@dataclass
class LabelerParams:
    config: EncoderConfig
    tensors: dict
    vocab: Vocab | None = None
    head: str = "crf"
    version: int = PARAMS_VERSION

    def copy(self) -> "LabelerParams":
        return LabelerParams(self.config, {k: v.copy() for k, v in self.tensors.items()},
                             self.vocab, self.head, self.version)

    @property
    def transitions(self) -> np.ndarray:
        return self.tensors["transitions"]

    def encode_tokens(self, surfaces: Sequence[str]) -> np.ndarray:
        if self.vocab is None:
            raise ValueError("parameters carry no vocabulary")
        return self.vocab.encode(surfaces)


def init_params(cfg: EncoderConfig, vocab: Vocab | None = None, head: str = "crf") -> LabelerParams:
    if vocab is not None and len(vocab) != cfg.vocab_size:
        raise ValueError(f"vocab has {len(vocab)} entries but config says {cfg.vocab_size}")
    if head not in ("crf", "softmax"):
        raise ValueError(f"unknown head {head!r}")
    rng = np.random.default_rng(cfg.seed)
    tensors = {"embedding": rng.uniform(-1.0, 1.0, size=(cfg.vocab_size, cfg.embed_dim))}
    if cfg.kind is EncoderKind.RECURRENT:
        tensors.update(Recurrent.init(cfg, rng))
    else:
        tensors.update(Attention.init(cfg, rng))
    tensors["emit.W"] = _uniform(rng, (cfg.hidden_dim, 3), cfg.hidden_dim)
    tensors["emit.b"] = np.zeros(3)
    tensors["transitions"] = np.zeros((5, 3))
    return LabelerParams(cfg, tensors, vocab, head)


def _ids(params: LabelerParams, token_ids) -> np.ndarray:
    ids = np.asarray(token_ids, dtype=np.int64)
    return np.where((ids < 0) | (ids >= params.config.vocab_size), UNK, ids)


def run_encoder(params: LabelerParams, X: np.ndarray):
    if params.config.kind is EncoderKind.RECURRENT:
        return Recurrent.forward(params.tensors, X)
    return Attention.forward(params.tensors, X, params.config.attention_heads)


def encoder_backward(params: LabelerParams, cache, dH):
    if params.config.kind is EncoderKind.RECURRENT:
        return Recurrent.backward(params.tensors, cache, dH)
    return Attention.backward(params.tensors, cache, dH)


def encode(params: LabelerParams, token_ids):
    """Hidden states ``(T, hidden_dim)`` and attention ``(heads, T, T)`` (None for the recurrent encoder)."""
    X = params.tensors["embedding"][_ids(params, token_ids)]
    H, A, _ = run_encoder(params, X)
    return H, A


def emissions_from_embeddings(params: LabelerParams, X: np.ndarray):
    H, A, cache = run_encoder(params, X)
    return H @ params.tensors["emit.W"] + params.tensors["emit.b"], H, cache


def emissions(params: LabelerParams, token_ids) -> np.ndarray:
    X = params.tensors["embedding"][_ids(params, token_ids)]
    return emissions_from_embeddings(params, X)[0]


def head_loss_grad(E, gold, loss_cfg: LossConfig, transitions):
    """Loss plus gradients w.r.t. emissions and transitions (None for softmax heads)."""
    if loss_cfg.kind is LossKind.CRF_NLL:
        return crf.crf_nll_grad(E, transitions, gold, loss_cfg.constrain_bio)
    if loss_cfg.kind is LossKind.SOFTMAX_NLL_WEIGHTED:
        loss, dE = softmax_nll_grad(E, gold, loss_cfg.class_weights)
    else:
        loss, dE = focal_loss_grad(E, gold, loss_cfg.class_weights, loss_cfg.gamma)
    return loss, dE, None


def loss_and_grad(params: LabelerParams, token_ids, gold, loss_cfg: LossConfig,
                  train: bool = False, rng: np.random.Generator | None = None):
    """Loss for one post and the gradient for every tensor in ``params``."""
    ids = _ids(params, token_ids)
    X = params.tensors["embedding"][ids]
    keep = None
    rate = params.config.dropout_rate
    if train and rate > 0:
        rng = rng if rng is not None else np.random.default_rng(params.config.seed)
        keep = (rng.random(X.shape) >= rate) / (1.0 - rate)
        X = X * keep
    E, H, cache = emissions_from_embeddings(params, X)
    loss, dE, dtrans = head_loss_grad(E, gold, loss_cfg, params.transitions)

    grads = {"emit.W": H.T @ dE, "emit.b": dE.sum(axis=0),
             "transitions": dtrans if dtrans is not None else np.zeros((5, 3))}
    enc_grads, dX = encoder_backward(params, cache, dE @ params.tensors["emit.W"].T)
    grads.update(enc_grads)
    if keep is not None:
        dX = dX * keep
    d_emb = np.zeros_like(params.tensors["embedding"])
    np.add.at(d_emb, ids, dX)
    grads["embedding"] = d_emb
    return float(loss), grads


def backward(params: LabelerParams, batch, loss_cfg: LossConfig, weights=None,
             train: bool = False, rng: np.random.Generator | None = None):
    """Weighted-mean loss over ``batch`` (pairs of token ids and gold labels) and its gradient.

    Raises :class:`NonFiniteError` naming the first tensor whose gradient is
    not finite.
    """
    weights = np.ones(len(batch)) if weights is None else np.asarray(weights, dtype=np.float64)
    norm = weights.sum()
    total = 0.0
    acc = {k: np.zeros_like(v) for k, v in params.tensors.items()}
    for (ids, gold), w in zip(batch, weights):
        loss, grads = loss_and_grad(params, ids, gold, loss_cfg, train, rng)
        total += w * loss
        for k, g in grads.items():
            acc[k] += (w / norm) * g
    for k, g in acc.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {k}", name=k)
    return total / norm, acc


def decode(params: LabelerParams, token_ids, constrain_bio: bool = True) -> TagSequence:
    """CRF head: Viterbi.  Softmax head: per-token argmax (never constrained)."""
    if len(token_ids) == 0:
        return TagSequence(())
    E = emissions(params, token_ids)
    if params.head == "crf":
        path, _ = crf.viterbi_decode(E, params.transitions, constrain_bio)
    else:
        path = np.argmax(E, axis=1).tolist()
    return TagSequence(tuple(BioLabel(p) for p in path))


def predict(params: LabelerParams, posts, constrain_bio: bool = True) -> list[TagSequence]:
    return [decode(params, params.encode_tokens(p.surfaces), constrain_bio) for p in posts]


def toxicity_and_grad(params: LabelerParams, X: np.ndarray, constrain_bio: bool = True):
    """Mean per-token toxic probability F and dF/dX for embedded input ``X``.

    CRF head: posterior B+I marginals; softmax head: B+I softmax mass.
    """
    E, H, cache = emissions_from_embeddings(params, X)
    T = E.shape[0]
    if params.head == "crf":
        F, dE = crf.toxicity_score_grad(E, params.transitions, constrain_bio)
    else:
        P = softmax(E, axis=1)
        tox = P[:, 1] + P[:, 2]
        F = float(tox.mean())
        c = np.array([0.0, 1.0, 1.0])
        dE = P * (c[None, :] - tox[:, None]) / T
    _, dX = encoder_backward(params, cache, dE @ params.tensors["emit.W"].T)
    return float(F), dX
