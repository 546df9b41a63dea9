"""Multi-domain training: domain weights, balanced batches, early stopping, grid search.

The update loop follows the multi-domain recipe: domains are weighted by
inverse size, every mini-batch is drawn domain-balanced, the batch loss is
the domain-weighted mean of per-post losses, and training stops once the
macro-averaged dev token F1 has not improved for ``patience`` epochs.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Hashable, Sequence

import numpy as np

from .augment import mask_tokens, MaskingConfig
from .corpus import Post, label_counts
from .errors import NonFiniteError, TrainingDiverged
from .labeler import model as lab
from .labeler.encoders import EncoderConfig
from .labeler.losses import LossConfig, class_weights
from .metrics import token_prf
from .synth import derive_seed
from .textproc import Domain


@dataclass(frozen=True)
class TrainConfig:
    """One training run plus the grids :func:`grid_search` sweeps.

    The single-run ``lr`` default suits the from-scratch desk encoders; the
    grid defaults are the fine-tuning grid used for large pretrained encoders.
    """

    lr: float = 0.05
    batch_size: int = 16
    dropout: float | None = None
    max_epochs: int = 20
    patience: int = 5
    seed: int = 42
    momentum: float = 0.9
    clip_norm: float = 5.0
    domain_weighting: bool = True
    single_domain: Domain | None = None
    stop_on: str = "macro"
    mask_prob: float = 0.0
    learning_rates: tuple[float, ...] = (1e-5, 3e-5, 5e-5)
    batch_sizes: tuple[int, ...] = (16, 32)
    dropouts: tuple[float, ...] = (0.1, 0.3)

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not (self.learning_rates and self.batch_sizes and self.dropouts):
            raise ValueError("grids must be non-empty")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.stop_on not in ("macro", "per-domain"):
            raise ValueError("stop_on must be 'macro' or 'per-domain'")


def domain_weights(counts: dict[Hashable, int]) -> dict[Hashable, float]:
    """``w_d = (1/|D_d|) / sum_d' (1/|D_d'|)``."""
    if not counts:
        raise ValueError("no domains")
    for dom, n in counts.items():
        if n <= 0:
            raise ValueError(f"domain {dom} is empty")
    inv = {d: 1.0 / n for d, n in counts.items()}
    total = sum(inv.values())
    return {d: v / total for d, v in inv.items()}


def balanced_batches(groups: dict[Hashable, Sequence], batch_size: int, rng: np.random.Generator,
                     n_batches: int | None = None) -> list[list[tuple[Hashable, object]]]:
    """Mini-batches with an equal share of slots per group.

    When ``batch_size`` is not a multiple of the group count the spare
    slots go round-robin across groups, continuing from batch to batch, so
    each group's epoch total stays within one slot of the uniform target.  Each group is consumed
    through reshuffled passes, so small groups are resampled.
    """
    keys = list(groups)
    if not keys:
        return []
    for k in keys:
        if len(groups[k]) == 0:
            raise ValueError(f"group {k} is empty")
    if n_batches is None:
        n_batches = math.ceil(sum(len(groups[k]) for k in keys) / batch_size)
    orders = {k: [] for k in keys}

    def draw(k):
        if not orders[k]:
            orders[k] = rng.permutation(len(groups[k])).tolist()[::-1]
        return groups[k][orders[k].pop()]

    base, extra = divmod(batch_size, len(keys))
    batches = []
    for b in range(n_batches):
        batch = []
        for j, k in enumerate(keys):
            share = base + (1 if (j - b * extra) % len(keys) < extra else 0)
            batch.extend((k, draw(k)) for _ in range(share))
        batches.append(batch)
    return batches


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    dev_f1: dict
    dev_macro: float

    def to_line(self) -> str:
        parts = [f"epoch={self.epoch}", f"loss={self.loss:.10g}"]
        parts += [f"dev_f1.{d}={v:.6f}" for d, v in sorted(self.dev_f1.items())]
        parts.append(f"dev_f1_macro={self.dev_macro:.6f}")
        return " ".join(parts)


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def best_dev_f1(self) -> float:
        return self.records[self.best_epoch - 1].dev_macro if self.best_epoch else 0.0

    def to_text(self) -> str:
        lines = [r.to_line() for r in self.records]
        lines.append(f"best_epoch={self.best_epoch} best_dev_f1_macro={self.best_dev_f1:.6f} "
                     f"stopped_early={str(self.stopped_early).lower()}")
        return "\n".join(lines) + "\n"


def dev_scores(params: lab.LabelerParams, dev: Sequence[Post], constrain_bio: bool = True) -> dict[str, float]:
    """Token F1 per domain on the dev posts."""
    preds = lab.predict(params, dev, constrain_bio)
    out = {}
    for dom in sorted({p.domain.value for p in dev}):
        idx = [i for i, p in enumerate(dev) if p.domain.value == dom]
        out[dom] = token_prf([preds[i] for i in idx], [dev[i].gold for i in idx]).f1
    return out


def _clip(grads: dict, max_norm: float) -> None:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale


def train(train_posts: Sequence[Post], dev_posts: Sequence[Post], train_cfg: TrainConfig = TrainConfig(),
          loss_cfg: LossConfig = LossConfig(), encoder_cfg: EncoderConfig = EncoderConfig(),
          vocab: lab.Vocab | None = None):
    """Train one labeler; return the best-dev checkpoint and the per-epoch log."""
    if train_cfg.single_domain is not None:
        dom = train_cfg.single_domain
        train_posts = [p for p in train_posts if p.domain is dom]
        dev_posts = [p for p in dev_posts if p.domain is dom]
    if not train_posts or not dev_posts:
        raise ValueError("training and dev sets must be non-empty")
    if any(p.gold is None for p in train_posts) or any(p.gold is None for p in dev_posts):
        raise ValueError("every training and dev post needs gold labels")

    vocab = vocab or lab.Vocab.build(p.surfaces for p in train_posts)
    enc = replace(encoder_cfg, vocab_size=len(vocab))
    if train_cfg.dropout is not None:
        enc = replace(enc, dropout_rate=train_cfg.dropout)
    if loss_cfg.derived_weights:
        counts = label_counts(train_posts)
        loss_cfg = replace(loss_cfg, class_weights=class_weights([counts[k] for k in sorted(counts)]))
    params = lab.init_params(enc, vocab, head=loss_cfg.head)

    groups: dict[str, list[Post]] = {}
    if train_cfg.domain_weighting:
        for p in train_posts:
            groups.setdefault(p.domain.value, []).append(p)
        weights = domain_weights({d: len(v) for d, v in groups.items()})
    else:
        groups = {"all": list(train_posts)}
        weights = {"all": 1.0}

    batch_rng = np.random.default_rng(derive_seed(train_cfg.seed, "trainer.batches"))
    drop_rng = np.random.default_rng(derive_seed(train_cfg.seed, "trainer.dropout"))
    mask_rng = np.random.default_rng(derive_seed(train_cfg.seed, "trainer.mask"))
    masking = MaskingConfig(enabled=train_cfg.mask_prob > 0, mask_prob=train_cfg.mask_prob)
    velocity = {k: np.zeros_like(v) for k, v in params.tensors.items()}

    log = TrainLog()
    best = params.copy()
    best_macro = -1.0
    best_per_domain: dict[str, float] = {}
    wait = 0
    for epoch in range(1, train_cfg.max_epochs + 1):
        losses = []
        for batch in balanced_batches(groups, train_cfg.batch_size, batch_rng):
            items, ws = [], []
            for key, post in batch:
                if masking.enabled:
                    post = mask_tokens(post, masking, mask_rng)
                items.append((vocab.encode(post.surfaces), post.gold.labels))
                ws.append(weights[key])
            try:
                loss, grads = lab.backward(params, items, loss_cfg, ws, train=True, rng=drop_rng)
            except NonFiniteError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}", params=best, log=log) from exc
            if not math.isfinite(loss):
                raise TrainingDiverged(f"epoch {epoch}: loss is {loss}", params=best, log=log)
            losses.append(loss)
            _clip(grads, train_cfg.clip_norm)
            for k, g in grads.items():
                velocity[k] = train_cfg.momentum * velocity[k] - train_cfg.lr * g
                params.tensors[k] += velocity[k]

        scores = dev_scores(params, dev_posts, loss_cfg.constrain_bio)
        macro = float(np.mean(list(scores.values())))
        log.records.append(EpochRecord(epoch, float(np.mean(losses)), scores, macro))
        if train_cfg.stop_on == "macro":
            improved = macro > best_macro
        else:
            improved = any(v > best_per_domain.get(d, -1.0) for d, v in scores.items())
            for d, v in scores.items():
                best_per_domain[d] = max(v, best_per_domain.get(d, -1.0))
        if macro > best_macro:
            best, best_macro, log.best_epoch = params.copy(), macro, epoch
        if improved:
            wait = 0
        else:
            wait += 1
            if wait >= train_cfg.patience:
                log.stopped_early = True
                break
    return best, log


# --------------------------------------------------------------------------
# grid search and cross-domain evaluation


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("SPANLAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class GridResult:
    best: tuple[float, int, float]
    table: tuple[tuple[tuple[float, int, float], float], ...]

    def to_text(self) -> str:
        lines = [f"lr={lr:g} batch_size={bs} dropout={dr:g} dev_f1_macro={f1:.6f}"
                 for (lr, bs, dr), f1 in self.table]
        lr, bs, dr = self.best
        lines.append(f"best lr={lr:g} batch_size={bs} dropout={dr:g}")
        return "\n".join(lines) + "\n"


def grid_search(train_posts, dev_posts, train_cfg: TrainConfig = TrainConfig(),
                loss_cfg: LossConfig = LossConfig(), encoder_cfg: EncoderConfig = EncoderConfig()) -> GridResult:
    """Exhaustive sweep; ties go to the smaller lr, then batch size, then dropout."""
    combos = sorted(itertools.product(sorted(set(train_cfg.learning_rates)), sorted(set(train_cfg.batch_sizes)),
                                      sorted(set(train_cfg.dropouts))))

    def run(combo):
        lr, bs, dr = combo
        cfg = replace(train_cfg, lr=lr, batch_size=bs, dropout=dr)
        _, log = train(train_posts, dev_posts, cfg, loss_cfg, encoder_cfg)
        return log.best_dev_f1

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        scores = list(pool.map(run, combos))
    best_i = 0
    for i, s in enumerate(scores):
        if s > scores[best_i]:
            best_i = i
    return GridResult(combos[best_i], tuple(zip(combos, scores)))


@dataclass(frozen=True)
class CrossDomainResult:
    rows: tuple[str, ...]
    cols: tuple[str, ...]
    f1: np.ndarray

    def to_text(self) -> str:
        width = max(12, *(len(c) + 2 for c in self.cols))
        lines = ["train\\test".ljust(14) + "".join(c.rjust(width) for c in self.cols)]
        for r, row in zip(self.rows, self.f1):
            lines.append(r.ljust(14) + "".join(f"{v:{width}.4f}" for v in row))
        return "\n".join(lines) + "\n"


def cross_domain_eval(train_posts, dev_posts, test_posts, train_cfg: TrainConfig = TrainConfig(),
                      loss_cfg: LossConfig = LossConfig(), encoder_cfg: EncoderConfig = EncoderConfig(),
                      metric: str = "token") -> CrossDomainResult:
    """Train one model per source domain plus a multi-domain model; score each on every domain's test posts."""
    from .metrics import evaluate

    domains = sorted({p.domain for p in train_posts}, key=lambda d: list(Domain).index(d))
    if len(domains) < 2:
        raise ValueError("cross-domain evaluation needs at least two domains")
    tests = {d: [p for p in test_posts if p.domain is d] for d in domains}
    sources = [(d.value, replace(train_cfg, single_domain=d)) for d in domains]
    sources.append(("multi", replace(train_cfg, single_domain=None)))
    matrix = np.zeros((len(sources), len(domains)))
    for r, (_, cfg) in enumerate(sources):
        params, _ = train(train_posts, dev_posts, cfg, loss_cfg, encoder_cfg)
        for c, d in enumerate(domains):
            preds = lab.predict(params, tests[d], loss_cfg.constrain_bio)
            report = evaluate(tests[d], preds)
            matrix[r, c] = report.token_f1 if metric == "token" else report.span_f1
    return CrossDomainResult(tuple(name for name, _ in sources), tuple(d.value for d in domains), matrix)
