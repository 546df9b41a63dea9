"""Per-token heads: class-weighted softmax NLL and focal loss, plus class weights."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax

from ..errors import ConfigError


class LossKind(str, enum.Enum):
    CRF_NLL = "crf"
    SOFTMAX_NLL_WEIGHTED = "weighted"
    FOCAL_LOSS = "focal"

    @classmethod
    def parse(cls, name: str) -> "LossKind":
        aliases = {"crf": cls.CRF_NLL, "crf_nll": cls.CRF_NLL,
                   "weighted": cls.SOFTMAX_NLL_WEIGHTED, "softmax": cls.SOFTMAX_NLL_WEIGHTED,
                   "softmaxnll_weighted": cls.SOFTMAX_NLL_WEIGHTED,
                   "focal": cls.FOCAL_LOSS, "focalloss": cls.FOCAL_LOSS}
        try:
            return aliases[name.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown loss {name!r}") from None


@dataclass(frozen=True)
class LossConfig:
    kind: LossKind = LossKind.CRF_NLL
    class_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    gamma: float = 2.0
    derived_weights: bool = False
    constrain_bio: bool = True

    def __post_init__(self):
        if isinstance(self.kind, str) and not isinstance(self.kind, LossKind):
            object.__setattr__(self, "kind", LossKind.parse(self.kind))
        if len(self.class_weights) != 3 or min(self.class_weights) <= 0:
            raise ConfigError("class weights must be three positive numbers")
        if self.gamma < 0:
            raise ConfigError("focal gamma must be >= 0")

    @property
    def head(self) -> str:
        return "crf" if self.kind is LossKind.CRF_NLL else "softmax"


def class_weights(counts) -> tuple[float, float, float]:
    """Inverse-frequency weights ``N / (K * n_i)`` for (O, B, I) counts."""
    counts = [float(c) for c in counts]
    if len(counts) != 3:
        raise ValueError("need counts for O, B and I")
    if min(counts) <= 0:
        raise ConfigError("a label class has zero count; add smoothing (loss.derived_weights=false "
                          "or explicit loss.class_weights) before deriving weights")
    total = sum(counts)
    return tuple(total / (3 * n) for n in counts)


def softmax_nll(emissions, gold, weights=(1.0, 1.0, 1.0)) -> float:
    """``sum_t w[y_t] * -log softmax(e_t)[y_t]``."""
    return softmax_nll_grad(emissions, gold, weights)[0]


def softmax_nll_grad(emissions, gold, weights=(1.0, 1.0, 1.0)):
    emissions = np.asarray(emissions, dtype=np.float64)
    gold = np.asarray([int(g) for g in gold])
    w = np.asarray(weights, dtype=np.float64)[gold]
    logp = log_softmax(emissions, axis=1)
    rows = np.arange(len(gold))
    loss = float(-(w * logp[rows, gold]).sum())
    grad = np.exp(logp)
    grad[rows, gold] -= 1.0
    return loss, grad * w[:, None]


def focal_loss(emissions, gold, weights=(1.0, 1.0, 1.0), gamma: float = 2.0) -> float:
    """``sum_t a[y_t] * (1 - p_t)^gamma * -log p_t`` with ``p_t`` the gold-label probability."""
    return focal_loss_grad(emissions, gold, weights, gamma)[0]


def focal_loss_grad(emissions, gold, weights=(1.0, 1.0, 1.0), gamma: float = 2.0):
    emissions = np.asarray(emissions, dtype=np.float64)
    gold = np.asarray([int(g) for g in gold])
    a = np.asarray(weights, dtype=np.float64)[gold]
    logp = log_softmax(emissions, axis=1)
    probs = np.exp(logp)
    rows = np.arange(len(gold))
    log_pt = logp[rows, gold]
    pt = probs[rows, gold]
    one_minus = -np.expm1(log_pt)
    mod = one_minus ** gamma
    loss = float(-(a * mod * log_pt).sum())
    # d loss / d log p_t, written to stay finite as p_t -> 1
    if gamma == 0:
        dl_dlogp = -a
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = np.where(one_minus > 0, gamma * pt * one_minus ** (gamma - 1) * log_pt, 0.0)
        dl_dlogp = a * (tail - mod)
    onehot = np.zeros_like(probs)
    onehot[rows, gold] = 1.0
    grad = dl_dlogp[:, None] * (onehot - probs)
    return loss, grad
