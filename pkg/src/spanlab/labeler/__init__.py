"""Sequence labeler: encoders, CRF and per-token heads, losses, decoding, parameter files."""

from .crf import (
    crf_log_partition,
    crf_nll,
    crf_nll_grad,
    marginals,
    sequence_score,
    viterbi_decode,
)
from .encoders import EncoderConfig, EncoderKind
from .losses import (
    LossConfig,
    LossKind,
    class_weights,
    focal_loss,
    focal_loss_grad,
    softmax_nll,
    softmax_nll_grad,
)
from .model import (
    LabelerParams,
    Vocab,
    backward,
    decode,
    emissions,
    encode,
    init_params,
    loss_and_grad,
    predict,
)
from .serialize import load_params, save_params

__all__ = [
    "EncoderConfig", "EncoderKind", "LabelerParams", "LossConfig", "LossKind", "Vocab",
    "backward", "class_weights", "crf_log_partition", "crf_nll", "crf_nll_grad", "decode",
    "emissions", "encode", "focal_loss", "focal_loss_grad", "init_params", "load_params",
    "loss_and_grad", "marginals", "predict", "save_params", "sequence_score", "softmax_nll",
    "softmax_nll_grad", "viterbi_decode",
]
