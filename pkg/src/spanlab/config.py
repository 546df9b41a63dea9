"""Run configuration: defaults, a flat ``section.key = value`` file, and flag overrides.

Example file::

    # comments start with '#'
    run.seed = 7
    train.lr = 0.05
    train.learning_rates = 0.01, 0.05
    loss.kind = focal
    augment.masking.enabled = true

Unknown keys, repeated keys and unparsable values are configuration
errors.  One seed (``run.seed`` or ``--seed``) feeds every component.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from .augment import AugmentConfig, CodeSwitchConfig, MaskingConfig, SynonymConfig
from .corpus import SplitSpec
from .errors import ConfigError
from .explain import GateMode, RationaleConfig, Threshold, TopK
from .labeler.encoders import EncoderConfig, EncoderKind
from .labeler.losses import LossConfig, LossKind
from .textproc import Domain, PipelineConfig, Step
from .trainer import TrainConfig


@dataclass(frozen=True)
class PreprocessConfig:
    dedup: bool = True
    dedup_threshold: float = 0.8


@dataclass(frozen=True)
class SynthConfig:
    n_posts: int = 600
    lexicon_size: int = 30
    domains: tuple[str, ...] = ("SocialMedia", "News", "YouTube")
    disjoint_lexicons: bool = False


@dataclass(frozen=True)
class ExplainConfig:
    method: str = "ig"  # ig | attention | are
    steps: int = 50
    threshold: float = 0.3


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    augment: AugmentConfig = field(default_factory=lambda: AugmentConfig(
        SynonymConfig(enabled=True), MaskingConfig(enabled=True), CodeSwitchConfig(enabled=True)))
    rationale: RationaleConfig = field(default_factory=RationaleConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def seeded(self) -> "RunConfig":
        """Push ``seed`` into every component that draws random numbers."""
        s = self.seed
        return replace(self, split=replace(self.split, seed=s), train=replace(self.train, seed=s),
                       encoder=replace(self.encoder, seed=s), augment=replace(self.augment, seed=s),
                       rationale=replace(self.rationale, seed=s))


# --------------------------------------------------------------------------
# value parsers


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("true", "on", "yes", "1"):
        return True
    if low in ("false", "off", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _list(item: Callable) -> Callable[[str], tuple]:
    return lambda v: tuple(item(x.strip()) for x in v.split(",") if x.strip())


def _optional(item: Callable) -> Callable:
    return lambda v: None if v.strip().lower() in ("", "none") else item(v)


def _pair(v: str) -> tuple[float, float]:
    vals = _list(float)(v)
    if len(vals) != 2:
        raise ValueError("expected two comma-separated numbers")
    return vals


def _method(v: str) -> str:
    v = v.strip().lower()
    if v not in ("ig", "attention", "are"):
        raise ValueError("explain.method must be ig, attention or are")
    return v


def _selection(v: str):
    kind, _, arg = v.strip().partition(":")
    if kind.lower() == "topk":
        return TopK(int(arg or 1))
    if kind.lower() == "threshold":
        return Threshold(float(arg or 0.5))
    raise ValueError("selection must be topk:<k> or threshold:<tau>")


def _domains(v: str) -> tuple[str, ...]:
    return tuple(Domain.parse(d).value for d in _list(str)(v))


# key -> (path of nested attribute names, parser)
SCHEMA: dict[str, tuple[tuple[str, ...], Callable]] = {
    "run.seed": (("seed",), int),
    "preprocess.dedup": (("preprocess", "dedup"), _bool),
    "preprocess.dedup_threshold": (("preprocess", "dedup_threshold"), float),
    "pipeline.steps": (("pipeline", "steps"), _list(Step.parse)),
    "pipeline.transliteration_table": (("pipeline", "transliteration_table"), _optional(str)),
    "pipeline.segmentation_table": (("pipeline", "segmentation_table"), _optional(str)),
    "pipeline.max_rounds": (("pipeline", "max_rounds"), int),
    "split.train_frac": (("split", "train_frac"), float),
    "split.dev_frac": (("split", "dev_frac"), float),
    "split.test_frac": (("split", "test_frac"), float),
    "split.stratify_on": (("split", "stratify_on"), _list(str)),
    "train.lr": (("train", "lr"), float),
    "train.batch_size": (("train", "batch_size"), int),
    "train.dropout": (("train", "dropout"), _optional(float)),
    "train.max_epochs": (("train", "max_epochs"), int),
    "train.patience": (("train", "patience"), int),
    "train.momentum": (("train", "momentum"), float),
    "train.clip_norm": (("train", "clip_norm"), float),
    "train.domain_weighting": (("train", "domain_weighting"), _bool),
    "train.stop_on": (("train", "stop_on"), str),
    "train.mask_prob": (("train", "mask_prob"), float),
    "train.learning_rates": (("train", "learning_rates"), _list(float)),
    "train.batch_sizes": (("train", "batch_sizes"), _list(int)),
    "train.dropouts": (("train", "dropouts"), _list(float)),
    "loss.kind": (("loss", "kind"), LossKind.parse),
    "loss.class_weights": (("loss", "class_weights"), _list(float)),
    "loss.gamma": (("loss", "gamma"), float),
    "loss.derived_weights": (("loss", "derived_weights"), _bool),
    "loss.constrain_bio": (("loss", "constrain_bio"), _bool),
    "encoder.kind": (("encoder", "kind"), EncoderKind.parse),
    "encoder.embed_dim": (("encoder", "embed_dim"), int),
    "encoder.hidden_dim": (("encoder", "hidden_dim"), int),
    "encoder.attention_heads": (("encoder", "attention_heads"), int),
    "encoder.dropout_rate": (("encoder", "dropout_rate"), float),
    "augment.synonym.enabled": (("augment", "synonym", "enabled"), _bool),
    "augment.synonym.replace_frac": (("augment", "synonym", "replace_frac"), _pair),
    "augment.synonym.dictionary": (("augment", "synonym", "dictionary"), _optional(str)),
    "augment.masking.enabled": (("augment", "masking", "enabled"), _bool),
    "augment.masking.mask_prob": (("augment", "masking", "mask_prob"), float),
    "augment.masking.mask_token": (("augment", "masking", "mask_token"), str),
    "augment.codeswitch.enabled": (("augment", "codeswitch", "enabled"), _bool),
    "augment.codeswitch.sample_frac": (("augment", "codeswitch", "sample_frac"), float),
    "augment.codeswitch.word_frac": (("augment", "codeswitch", "word_frac"), _pair),
    "augment.codeswitch.dictionary": (("augment", "codeswitch", "dictionary"), _optional(str)),
    "rationale.lambda": (("rationale", "lam"), float),
    "rationale.selection": (("rationale", "selection"), _selection),
    "rationale.gate_mode": (("rationale", "gate_mode"), lambda v: GateMode(v.strip().lower())),
    "rationale.lr": (("rationale", "lr"), float),
    "rationale.epochs": (("rationale", "epochs"), int),
    "rationale.batch_size": (("rationale", "batch_size"), int),
    "explain.method": (("explain", "method"), _method),
    "explain.steps": (("explain", "steps"), int),
    "explain.threshold": (("explain", "threshold"), float),
    "synth.n_posts": (("synth", "n_posts"), int),
    "synth.lexicon_size": (("synth", "lexicon_size"), int),
    "synth.domains": (("synth", "domains"), _domains),
    "synth.disjoint_lexicons": (("synth", "disjoint_lexicons"), _bool),
}


def parse_config_text(text: str, path: str = "<config>") -> dict[str, str]:
    """Raw ``key -> value`` strings; rejects malformed lines, unknown and repeated keys."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError("expected 'section.key = value'", path, lineno)
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", path, lineno)
        if key in values:
            raise ConfigError(f"key {key!r} given twice", path, lineno)
        values[key] = value.strip()
    return values


def _rebuild(obj, changes: dict):
    """Replace fields of ``obj`` from a nested change tree, innermost first."""
    kwargs = {}
    for name, value in changes.items():
        kwargs[name] = _rebuild(getattr(obj, name), value) if isinstance(value, dict) else value
    return replace(obj, **kwargs)


def apply(cfg: RunConfig, values: dict[str, object], path: str = "<config>") -> RunConfig:
    """Apply raw strings or already-typed values; any validation failure is a ConfigError.

    All keys of a section are applied together, so cross-field checks
    (split fractions summing to one, heads dividing width) see the final state.
    """
    tree: dict = {}
    for key, raw in values.items():
        names, parse = SCHEMA[key]
        try:
            value = parse(raw) if isinstance(raw, str) else raw
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{key}: {exc}", path) from None
        node = tree
        for name in names[:-1]:
            node = node.setdefault(name, {})
        node[names[-1]] = value
    try:
        return _rebuild(cfg, tree)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), path) from None


def load_config(path: str | None = None, overrides: dict[str, object] | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides``; seeds are propagated last."""
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(path)
        cfg = apply(cfg, parse_config_text(p.read_text(encoding="utf-8"), path), path)
    if overrides:
        cfg = apply(cfg, overrides, "<flags>")
    return cfg.seeded()
