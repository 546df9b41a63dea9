"""``spanlab`` command-line entry point.

Exit codes: 0 success, 1 other toolkit error, 2 usage error, 3 missing
input file, 4 configuration error or conflict, 5 malformed corpus or
parameter file.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __version__
from . import agreement, augment, corpus, explain, metrics, synth, textproc, trainer
from .config import RunConfig, load_config
from .corpus import Post, TagSequence
from .errors import ConfigError, CorpusFormatError, ParamsFileError, SpanlabError
from .labeler import model as lab
from .labeler.serialize import load_params, save_params

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_MISSING, EXIT_CONFIG, EXIT_FORMAT = 0, 1, 2, 3, 4, 5

COMMANDS = ("preprocess", "stats", "agreement", "split", "train", "grid", "eval", "crossdomain",
            "predict", "explain", "augment", "synth")


class UsageError(Exception):
    pass


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="flat 'section.key = value' configuration file")
    p.add_argument("--seed", type=int, help="random seed for every component (overrides run.seed)")
    p.add_argument("--input", help="input corpus (raw JSON lines for preprocess)")
    p.add_argument("--output", help="output file, or directory for split; stdout when omitted")
    p.add_argument("--model", help="parameter file to write (train) or read (predict, eval, explain)")
    p.add_argument("--format", choices=("ansi", "html", "tsv"), default="tsv",
                   help="output format for predict and explain")
    p.add_argument("--constrain-bio", choices=("on", "off"),
                   help="BIO-constrained decoding (overrides loss.constrain_bio)")
    p.add_argument("--loss", choices=("crf", "weighted", "focal"), help="training loss (overrides loss.kind)")
    p.add_argument("--encoder", choices=("recurrent", "attention"), help="encoder kind (overrides encoder.kind)")
    p.add_argument("--dev", help="dev corpus for train, grid and crossdomain")
    p.add_argument("--test", help="test corpus for crossdomain")
    p.add_argument("--pred", help="predicted corpus for eval (tags in the label column)")
    p.add_argument("--method", choices=("ig", "attention", "are"), help="explain method (overrides explain.method)")
    p.add_argument("--train", dest="train_corpus",
                   help="corpus with post-level labels for explain --method are (defaults to --input)")
    return p


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="spanlab", formatter_class=fmt,
                                     description="Toxic span detection toolkit.")
    parser.add_argument("--version", action="version", version=f"spanlab {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    common = _common()
    helps = {
        "preprocess": "normalize and tokenize raw JSON-lines posts, drop near-duplicates",
        "stats": "corpus statistics",
        "agreement": "inter-annotator agreement over extra label columns",
        "split": "stratified train/dev/test split",
        "train": "train a labeler and write its parameter file",
        "grid": "hyperparameter grid search",
        "eval": "span and token metrics for predictions against gold",
        "crossdomain": "train-on-one, test-on-each domain matrix",
        "predict": "tag a corpus with a trained model",
        "explain": "integrated gradients, attention indicators or ARE rationales",
        "augment": "label-preserving augmentation",
        "synth": "generate a synthetic planted-lexicon corpus",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], formatter_class=fmt, help=helps[name], description=helps[name])
    return parser


# --------------------------------------------------------------------------
# helpers


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            flag = "--train" if name == "train_corpus" else "--" + name.replace("_", "-")
            raise UsageError(f"{args.command} needs {flag}")


def _load(path: str) -> list[Post]:
    if not Path(path).is_file():
        raise FileNotFoundError(path)
    return corpus.load_corpus(path)


def _emit(args, text: str) -> None:
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dest(args) -> str:
    return args.output or "stdout"


def _labelled(posts: Sequence[Post], what: str) -> list[Post]:
    if any(p.gold is None for p in posts):
        raise CorpusFormatError(f"{what} corpus has posts without labels")
    return list(posts)


def _model(args) -> lab.LabelerParams:
    _require(args, "model")
    if not Path(args.model).is_file():
        raise FileNotFoundError(args.model)
    return load_params(args.model)


def _lines(lines) -> str:
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# subcommands; each returns its one-line summary


def cmd_preprocess(args, cfg: RunConfig) -> str:
    _require(args, "input")
    if not Path(args.input).is_file():
        raise FileNotFoundError(args.input)
    raws = corpus.load_raw_jsonl(args.input)
    posts = [corpus.post_from_raw(r, cfg.pipeline) for r in raws]
    kept = textproc.dedup(posts, cfg.preprocess.dedup_threshold) if cfg.preprocess.dedup else posts
    _emit(args, corpus.format_corpus(kept))
    return f"preprocess: {len(raws)} posts read, {len(kept)} kept -> {_dest(args)}"


def cmd_stats(args, cfg: RunConfig) -> str:
    _require(args, "input")
    posts = _load(args.input)
    st = corpus.compute_stats(posts)
    _emit(args, _lines(st.to_lines()))
    return f"stats: {st.n_posts} posts, {st.n_spans} spans -> {_dest(args)}"


def cmd_agreement(args, cfg: RunConfig) -> str:
    _require(args, "input")
    posts = _load(args.input)
    try:
        report = agreement.agreement_report(posts)
    except ValueError as exc:
        raise CorpusFormatError(str(exc)) from None
    lines = report.to_lines()
    lines += [f"disagreement\t{d.post_id}\t{d.count}\t{','.join(map(str, d.positions))}"
              for d in report.disagreements]
    _emit(args, _lines(lines))
    fmt = lambda x: "nan" if x is None else f"{x:.4f}"  # noqa: E731
    return f"agreement: kappa={fmt(report.kappa)} alpha={fmt(report.alpha)} over {report.n_units} tokens"


def cmd_split(args, cfg: RunConfig) -> str:
    _require(args, "input", "output")
    posts = _load(args.input)
    parts = corpus.stratified_split(posts, cfg.split)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in zip(("train", "dev", "test"), parts):
        corpus.save_corpus(part, out / f"{name}.tsv")
    return f"split: train={len(parts[0])} dev={len(parts[1])} test={len(parts[2])} -> {out}"


def cmd_train(args, cfg: RunConfig) -> str:
    _require(args, "input", "dev", "model")
    tr = _labelled(_load(args.input), "training")
    dv = _labelled(_load(args.dev), "dev")
    params, log = trainer.train(tr, dv, cfg.train, cfg.loss, cfg.encoder)
    save_params(params, args.model)
    if args.output:
        Path(args.output).write_text(log.to_text(), encoding="utf-8")
    return (f"train: {len(log.records)} epochs, best epoch {log.best_epoch}, "
            f"dev macro token F1 {log.best_dev_f1:.4f} -> {args.model}")


def cmd_grid(args, cfg: RunConfig) -> str:
    _require(args, "input", "dev")
    tr = _labelled(_load(args.input), "training")
    dv = _labelled(_load(args.dev), "dev")
    result = trainer.grid_search(tr, dv, cfg.train, cfg.loss, cfg.encoder)
    _emit(args, result.to_text())
    lr, bs, dr = result.best
    return f"grid: {len(result.table)} runs, best lr={lr:g} batch_size={bs} dropout={dr:g}"


def _align(gold: Sequence[Post], pred: Sequence[Post]) -> list[TagSequence]:
    by_id = {p.id: p for p in pred}
    out = []
    for g in gold:
        p = by_id.get(g.id)
        if p is None or p.gold is None:
            raise CorpusFormatError(f"no prediction for post {g.id!r}")
        if p.surfaces != g.surfaces:
            raise CorpusFormatError(f"prediction tokens differ from gold for post {g.id!r}")
        out.append(p.gold)
    return out


def cmd_eval(args, cfg: RunConfig) -> str:
    _require(args, "input")
    gold = _labelled(_load(args.input), "gold")
    if args.pred is not None:
        preds = _align(gold, _load(args.pred))
    elif args.model is not None:
        preds = lab.predict(_model(args), gold, cfg.loss.constrain_bio)
    else:
        raise UsageError("eval needs --pred or --model")
    report = metrics.evaluate(gold, preds, per_class=True)
    lines = report.to_lines()
    groups = metrics.breakdown(gold, preds, "domain")
    for name, r in groups.items():
        lines += r.to_lines(prefix=f"domain.{name}.")
    table = metrics.format_table({"all": report, **groups})
    _emit(args, _lines(lines) + "\n" + table + "\n")
    return f"eval: span_f1={report.span_f1:.4f} token_f1={report.token_f1:.4f} on {report.n_posts} posts"


def cmd_crossdomain(args, cfg: RunConfig) -> str:
    _require(args, "input", "dev", "test")
    tr = _labelled(_load(args.input), "training")
    dv = _labelled(_load(args.dev), "dev")
    te = _labelled(_load(args.test), "test")
    try:
        result = trainer.cross_domain_eval(tr, dv, te, cfg.train, cfg.loss, cfg.encoder)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _emit(args, result.to_text())
    return f"crossdomain: {len(result.rows)} sources x {len(result.cols)} targets -> {_dest(args)}"


def _render(args, posts, marks) -> str:
    if args.format == "tsv":
        return corpus.format_corpus([p.with_gold(m) for p, m in zip(posts, marks)])
    return explain.render_report(posts, marks, args.format)


def cmd_predict(args, cfg: RunConfig) -> str:
    _require(args, "input")
    params = _model(args)
    posts = _load(args.input)
    preds = lab.predict(params, posts, cfg.loss.constrain_bio)
    _emit(args, _render(args, posts, preds))
    toxic = sum(any(t != 0 for t in p) for p in preds)
    return f"predict: {len(posts)} posts, {toxic} with toxic spans -> {_dest(args)}"


def cmd_explain(args, cfg: RunConfig) -> str:
    _require(args, "input")
    posts = _load(args.input)
    method = cfg.explain.method
    if method == "ig":
        params = _model(args)
        maps = [explain.integrated_gradients(params, p, cfg.explain.steps, constrain_bio=cfg.loss.constrain_bio)
                for p in posts]
        if args.format == "tsv":
            text = "".join(_lines([f"#id {p.id}"] + m.to_lines()) + "\n" for p, m in zip(posts, maps))
        else:
            text = explain.render_report(posts, maps, args.format)
        _emit(args, text)
        worst = max((m.relative_residual for m in maps), default=0.0)
        return f"explain: integrated gradients for {len(posts)} posts, max relative residual {worst:.2e}"
    if method == "attention":
        params = _model(args)
        tags = [explain.attention_tags(params, p, cfg.explain.threshold) for p in posts]
    else:
        source = _labelled(_load(args.train_corpus or args.input), "ARE training")
        are = explain.are_train(source, cfg.rationale, cfg.encoder)
        tags = [explain.are_extract(are, p, cfg.rationale) for p in posts]
    _emit(args, _render(args, posts, tags))
    marked = sum(any(t != 0 for t in s) for s in tags)
    return f"explain: {method} rationales for {len(posts)} posts, {marked} highlighted -> {_dest(args)}"


def cmd_augment(args, cfg: RunConfig) -> str:
    _require(args, "input")
    posts = _labelled(_load(args.input), "augmentation")
    out = augment.augment_corpus(posts, cfg.augment)
    changed = sum(a != b for p, q in zip(posts, out) for a, b in zip(p.surfaces, q.surfaces))
    _emit(args, corpus.format_corpus([replace(q, id=f"{q.id}:aug") for q in out]))
    total = sum(len(p.tokens) for p in posts)
    return f"augment: {changed} of {total} tokens altered in {len(posts)} posts -> {_dest(args)}"


def cmd_synth(args, cfg: RunConfig) -> str:
    s = cfg.synth
    posts = synth.generate(seed=cfg.seed, n_posts=s.n_posts, lexicon_size=s.lexicon_size,
                           domains=s.domains, disjoint_lexicons=s.disjoint_lexicons)
    _emit(args, corpus.format_corpus(posts))
    toxic = sum(p.is_toxic for p in posts)
    return f"synth: {len(posts)} posts ({toxic} toxic) seed={cfg.seed} -> {_dest(args)}"


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def _overrides(args) -> dict[str, object]:
    out: dict[str, object] = {}
    if args.seed is not None:
        out["run.seed"] = args.seed
    if args.constrain_bio is not None:
        out["loss.constrain_bio"] = args.constrain_bio
    if args.loss is not None:
        out["loss.kind"] = args.loss
    if args.encoder is not None:
        out["encoder.kind"] = args.encoder
    if args.method is not None:
        out["explain.method"] = args.method
    return out


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config, _overrides(args))
        summary = HANDLERS[args.command](args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"spanlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"spanlab: error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigError as exc:
        print(f"spanlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CorpusFormatError, ParamsFileError) as exc:
        print(f"spanlab: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (SpanlabError, ValueError) as exc:
        print(f"spanlab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
