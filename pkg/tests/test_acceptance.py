"""Acceptance criteria; each test records one PASS/FAIL line shown in the terminal summary."""

import itertools
import random
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ENC_SMALL
from test_agreement import alpha_oracle
from spanlab import cli, explain, metrics, synth, trainer
from spanlab.agreement import cohen_kappa, krippendorff_alpha
from spanlab.augment import AugmentConfig, CodeSwitchConfig, MaskingConfig, SynonymConfig, augment_corpus
from spanlab.corpus import BioLabel, Post, TagSequence, is_valid_bio
from spanlab.labeler import EncoderConfig, EncoderKind, LossConfig, LossKind, init_params, loss_and_grad
from spanlab.labeler import model as lab
from spanlab.labeler.crf import START, STOP, crf_log_partition, viterbi_decode
from spanlab.labeler.losses import class_weights, focal_loss, softmax_nll
from spanlab.textproc import Domain, Token, _data_path

# ---------------------------------------------------------------- 1


def _paths(T, constrain):
    p = np.array(list(itertools.product(range(3), repeat=T)))
    if constrain:
        bad = (p[:, 0] == 2) | ((p[:, :-1] == 0) & (p[:, 1:] == 2)).any(axis=1)
        p = p[~bad]
    return p


def _brute(E, tr, paths):
    T = E.shape[0]
    s = tr[START, paths[:, 0]] + tr[STOP, paths[:, -1]] + E[np.arange(T), paths].sum(axis=1)
    if T > 1:
        s = s + tr[paths[:, :-1], paths[:, 1:]].sum(axis=1)
    m = s.max()
    return m + np.log(np.exp(s - m).sum()), s


def test_ac01_crf_matches_enumeration(record):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst, viterbi_ok, n = 0.0, True, 0
    for i in range(1000):
        T = int(rng.integers(1, 7))
        constrain = bool(i % 2)
        E, tr = rng.normal(size=(T, 3)) * 2, rng.normal(size=(5, 3))
        paths = _paths(T, constrain)
        log_z, scores = _brute(E, tr, paths)
        worst = max(worst, abs(crf_log_partition(E, tr, constrain) - log_z))
        path, _ = viterbi_decode(E, tr, constrain)
        (row,) = np.flatnonzero((paths == path).all(axis=1))
        viterbi_ok &= scores[row] == scores.max()
        n += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and viterbi_ok and elapsed < 30
    record(1, ok, f"CRF oracle: {n} instances T<=6, max |logZ - brute| {worst:.1e} (tol 1e-8), "
                  f"viterbi score == brute max: {viterbi_ok}, {elapsed:.1f}s (limit 30s)")
    assert ok


# ---------------------------------------------------------------- 2


def test_ac02_gradients_match_finite_differences(record):
    start = time.perf_counter()
    eps, worst, checked = 1e-4, 0.0, 0
    rng = np.random.default_rng(2)
    for kind in EncoderKind:
        for loss in LossKind:
            cfg = EncoderConfig(kind, vocab_size=10, embed_dim=4, hidden_dim=6, attention_heads=2,
                                dropout_rate=0.0, seed=3)
            params = init_params(cfg, head=LossConfig(kind=loss).head)
            params.tensors["transitions"] = rng.normal(scale=0.5, size=(5, 3))
            lcfg = LossConfig(kind=loss, class_weights=(0.5, 2.0, 2.5))
            ids, gold = [2, 7, 4, 9, 3], [0, 1, 2, 0, 1]
            _, grads = loss_and_grad(params, ids, gold, lcfg)
            for name, tensor in params.tensors.items():
                num = np.zeros_like(tensor)
                for idx in np.ndindex(tensor.shape):
                    old = tensor[idx]
                    tensor[idx] = old + eps
                    lp, _ = loss_and_grad(params, ids, gold, lcfg)
                    tensor[idx] = old - eps
                    lm, _ = loss_and_grad(params, ids, gold, lcfg)
                    tensor[idx] = old
                    num[idx] = (lp - lm) / (2 * eps)
                scale = max(np.linalg.norm(num), np.linalg.norm(grads[name]))
                if scale > 0:
                    worst = max(worst, np.linalg.norm(num - grads[name]) / scale)
                checked += tensor.size
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-4 and elapsed < 60
    record(2, ok, f"gradients: 3 losses x 2 encoders, {checked} coordinates, T=5, eps=1e-4, "
                  f"max per-tensor relative error {worst:.1e} (tol 1e-4), {elapsed:.1f}s (limit 60s)")
    assert ok


# ---------------------------------------------------------------- 3


def test_ac03_constrained_decoding_never_invalid(record):
    rng = np.random.default_rng(3)
    zero = np.zeros((5, 3))
    bad_constrained = bad_argmax = 0
    for _ in range(10_000):
        E = rng.normal(size=(int(rng.integers(1, 13)), 3))
        path, _ = viterbi_decode(E, zero, constrain_bio=True)
        bad_constrained += not is_valid_bio(path)
        bad_argmax += not is_valid_bio(np.argmax(E, axis=1).tolist())
    ok = bad_constrained == 0 and bad_argmax > 0
    record(3, ok, f"invalid BIO on 10000 emission matrices: constrained {bad_constrained / 100:.2f}% "
                  f"(must be 0), per-token argmax {bad_argmax / 100:.2f}% (must be > 0)")
    assert ok


# ---------------------------------------------------------------- 4


def test_ac04_class_weights(record):
    w = class_weights((72, 15, 13))
    shown = tuple(round(x, 2) for x in w)
    published = (0.46, 2.21, 2.56)
    # weights compared at the two-decimal precision they are published in
    gap = max(abs(a - b) for a, b in zip(shown, published))
    ok = gap <= 0.01 + 1e-12
    record(4, ok, f"class weights 72/15/13: raw ({w[0]:.4f}, {w[1]:.4f}, {w[2]:.4f}), "
                  f"2 d.p. {shown} vs published {published}, max gap {gap:.2f} (tol 0.01)")
    assert ok


# ---------------------------------------------------------------- 5


def test_ac05_focal_gamma_zero(record):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(500):
        T = int(rng.integers(1, 10))
        E = rng.normal(scale=2, size=(T, 3))
        gold = rng.integers(0, 3, size=T).tolist()
        w = tuple(rng.uniform(0.2, 3, size=3))
        worst = max(worst, abs(focal_loss(E, gold, w, 0.0) - softmax_nll(E, gold, w)))
    ok = worst <= 1e-10
    record(5, ok, f"focal(gamma=0) vs weighted CE on 500 instances: max |diff| {worst:.1e} (tol 1e-10)")
    assert ok


# ---------------------------------------------------------------- 6


def _bitmap(pred, gold):
    p = np.zeros(80, bool)
    g = np.zeros(80, bool)
    p[list(pred)] = True
    g[list(gold)] = True
    if not p.any() and not g.any():
        return (1.0, 1.0, 1.0)
    if not p.any() or not g.any():
        return (0.0, 0.0, 0.0)
    hit = int((p & g).sum())
    P, R = hit / int(p.sum()), hit / int(g.sum())
    return (P, R, 2 * P * R / (P + R) if hit else 0.0)


def test_ac06_span_metric_oracle(record):
    rng = random.Random(6)
    mismatches = 0
    for _ in range(1000):
        pred = {i for i in range(80) if rng.random() < rng.random() * 0.4}
        gold = {i for i in range(80) if rng.random() < rng.random() * 0.4}
        mismatches += tuple(metrics.span_prf(pred, gold)) != _bitmap(pred, gold)
    worked = tuple(metrics.span_prf(range(3, 11), range(5, 13)))
    ok = mismatches == 0 and worked == (0.75, 0.75, 0.75)
    record(6, ok, f"span P/R/F1 vs bitmap oracle: {mismatches} mismatches in 1000 (must be 0); "
                  f"pred 3..10 vs gold 5..12 -> {worked}")
    assert ok


# ---------------------------------------------------------------- 7


def test_ac07_agreement_sanity(record):
    a = ["O", "B", "I", "O", "B", "O"]
    k = cohen_kappa(a, list(a)).kappa
    al = krippendorff_alpha([a, list(a)])
    a1, a2 = ["O", "B", "O", "B"], ["O", "O", "B", "B"]
    got, want = krippendorff_alpha([a1, a2]), alpha_oracle([a1, a2])
    ok = k == 1.0 and al == 1.0 and abs(got - want) <= 1e-12
    record(7, ok, f"identical annotations kappa={k} alpha={al}; 4-unit alpha {got:.12f} "
                  f"vs coincidence oracle {want:.12f} (tol 1e-12)")
    assert ok


# ---------------------------------------------------------------- 8


def test_ac08_integrated_gradients_completeness(record, small_model, synth_split):
    rng = np.random.default_rng(8)
    W = rng.normal(size=(5, 4))
    X = rng.normal(size=(5, 4))
    linear = max(abs(attr.sum() - (fx - fb))
                 for m in (1, 10, 50, 200)
                 for attr, fx, fb in [explain.path_integral(lambda z: (float((W * z).sum()), W), X, steps=m)])
    params, _ = small_model
    posts = [p for p in synth_split[2] if p.is_toxic][:10]
    rel, shrinks = [], True
    for p in posts:
        hi = explain.integrated_gradients(params, p, steps=200)
        lo = explain.integrated_gradients(params, p, steps=10)
        rel.append(hi.relative_residual)
        shrinks &= hi.completeness_residual < lo.completeness_residual
    ok = linear <= 1e-12 and max(rel) <= 0.01 and shrinks
    record(8, ok, f"IG completeness: linear residual {linear:.1e} (tol 1e-12); trained model m=200 "
                  f"max relative residual {max(rel):.2e} over {len(posts)} posts (tol 1e-2); "
                  f"residual(200) < residual(10) for all: {shrinks}")
    assert ok


# ---------------------------------------------------------------- 9


def test_ac09_end_to_end_synthetic_learning(record, synth_split):
    tr, dv, te = synth_split
    start = time.perf_counter()
    params, log = trainer.train(tr, dv, trainer.TrainConfig(max_epochs=20), LossConfig(),
                                EncoderConfig(EncoderKind.RECURRENT, embed_dim=32, hidden_dim=64))
    report = metrics.evaluate(te, lab.predict(params, te))
    elapsed = time.perf_counter() - start
    ok = report.token_f1 >= 0.90 and report.span_f1 >= 0.85 and elapsed < 300 and len(log.records) <= 20
    record(9, ok, f"synthetic learning (seed 42, 600 posts, recurrent+CRF, {len(log.records)} epochs): "
                  f"test token F1 {report.token_f1:.4f} (>= 0.90), span F1 {report.span_f1:.4f} (>= 0.85), "
                  f"{elapsed:.0f}s (limit 300s)")
    assert ok


# ---------------------------------------------------------------- 10


def test_ac10_qualitative_orderings(record, disjoint_split, disjoint_crossdomain):
    tr, dv, te = disjoint_split
    enc = EncoderConfig(**ENC_SMALL)
    cfg = trainer.TrainConfig(max_epochs=8)
    crf_params, _ = trainer.train(tr, dv, cfg, LossConfig(), enc)
    sm_params, _ = trainer.train(tr, dv, cfg, LossConfig(kind="weighted", derived_weights=True), enc)
    crf_f1 = metrics.evaluate(te, lab.predict(crf_params, te)).token_f1
    sm_f1 = metrics.evaluate(te, lab.predict(sm_params, te)).token_f1

    are = explain.are_train(tr, explain.RationaleConfig(), enc)
    are_f1 = metrics.evaluate(te, [explain.are_extract(are, p) for p in te]).token_f1

    m = disjoint_crossdomain.f1
    k = len(disjoint_crossdomain.cols)
    diag = np.diag(m[:k])
    off = m[:k][~np.eye(k, dtype=bool)]
    per_row = all(np.delete(m[i], i).max() < m[i, i] for i in range(k))

    a, b, c = crf_f1 >= sm_f1, per_row, crf_f1 > are_f1
    ok = a and b and c
    record(10, ok, f"disjoint-lexicon orderings: (a) CRF {crf_f1:.4f} >= softmax {sm_f1:.4f}: {a}; "
                   f"(b) off-diagonal mean {off.mean():.4f} (max {off.max():.4f}) < diagonal mean "
                   f"{diag.mean():.4f}, every row: {b}; (c) CRF {crf_f1:.4f} > ARE {are_f1:.4f}: {c}")
    assert ok


# ---------------------------------------------------------------- 11


def _dictionary_posts(n_posts, length, rng):
    syn = sorted(set(Path(_data_path("synonyms_demo.tsv")).read_text(encoding="utf-8").split()) - {"#"})
    words = [w.split(",")[0] for w in syn if w.isalpha()]
    posts = []
    for i in range(n_posts):
        ws = [words[j] for j in rng.integers(0, len(words), size=length)]
        gold = [0] * length
        a = int(rng.integers(0, length - 3))
        gold[a:a + 3] = [1, 2, 2]  # toxic run made of dictionary words, so it would be eligible if unprotected
        toks, pos = [], 0
        for w in ws:
            toks.append(Token(w, pos, pos + len(w)))
            pos += len(w) + 1
        posts.append(Post(f"a{i}", Domain.SOCIAL_MEDIA, " ".join(ws), tuple(toks),
                          TagSequence(tuple(BioLabel(g) for g in gold))))
    return posts


def test_ac11_augmentation_properties(record):
    rng = np.random.default_rng(11)
    posts = _dictionary_posts(500, 25, rng)
    cfg = AugmentConfig(SynonymConfig(enabled=True), MaskingConfig(enabled=True),
                        CodeSwitchConfig(enabled=True), seed=11)
    out = augment_corpus(posts, cfg)
    eligible = masked = toxic_changed = altered = 0
    labels_same = True
    for before, after in zip(posts, out):
        labels_same &= after.gold.labels == before.gold.labels
        for i, lab_ in enumerate(before.gold):
            changed = after.surfaces[i] != before.surfaces[i]
            if lab_ == BioLabel.O:
                eligible += 1
                masked += after.surfaces[i] == "[MASK]"
                altered += changed
            else:
                toxic_changed += changed
    rate = masked / eligible
    total = sum(len(p.tokens) for p in posts)
    ok = total >= 10_000 and abs(rate - 0.05) <= 0.01 and toxic_changed == 0 and labels_same
    record(11, ok, f"augmentation over {total} tokens: mask rate {rate:.4f} of {eligible} non-toxic "
                   f"(0.05 +/- 0.01); toxic tokens altered {toxic_changed} (must be 0); "
                   f"{altered} non-toxic altered; labels bit-identical: {labels_same}")
    assert ok


# ---------------------------------------------------------------- 12

RUN_CFG = """\
encoder.embed_dim = 8
encoder.hidden_dim = 8
encoder.attention_heads = 2
train.max_epochs = 2
train.learning_rates = 0.05
train.batch_sizes = 16
train.dropouts = 0.1
rationale.epochs = 2
explain.steps = 8
synth.n_posts = 150
"""

RAW = [
    '{"id": "r1", "domain": "SocialMedia", "text": "tum bohat bure ho http://x.co"}',
    '{"id": "r2", "domain": "News", "text": "aaj ki khabar acha hai!!!"}',
    '{"id": "r3", "domain": "News", "text": "aaj ki khabar achha hai"}',
    '{"id": "r4", "domain": "YouTube", "text": "یہ ویڈیو اچھی ہے"}',
]


def _pipeline(root: Path, seed: str):
    root.mkdir()
    (root / "run.cfg").write_text(RUN_CFG, encoding="utf-8")
    (root / "raw.jsonl").write_text("\n".join(RAW) + "\n", encoding="utf-8")
    demo = str(_data_path("demo_corpus.tsv"))
    f = lambda name: str(root / name)  # noqa: E731
    common = ["--config", f("run.cfg"), "--seed", seed]
    steps = [
        ("synth", ["--output", f("corpus.tsv")]),
        ("preprocess", ["--input", f("raw.jsonl"), "--output", f("pre.tsv")]),
        ("stats", ["--input", f("corpus.tsv"), "--output", f("stats.txt")]),
        ("agreement", ["--input", demo, "--output", f("agreement.txt")]),
        ("split", ["--input", f("corpus.tsv"), "--output", f("split")]),
        ("train", ["--input", f("split/train.tsv"), "--dev", f("split/dev.tsv"), "--model", f("m.bin"),
                   "--output", f("train.log")]),
        ("train", ["--input", f("split/train.tsv"), "--dev", f("split/dev.tsv"), "--model", f("attn.bin"),
                   "--encoder", "attention"]),
        ("grid", ["--input", f("split/train.tsv"), "--dev", f("split/dev.tsv"), "--output", f("grid.txt")]),
        ("eval", ["--input", f("split/test.tsv"), "--model", f("m.bin"), "--output", f("eval.txt")]),
        ("crossdomain", ["--input", f("split/train.tsv"), "--dev", f("split/dev.tsv"),
                         "--test", f("split/test.tsv"), "--output", f("cross.txt")]),
        ("predict", ["--input", f("split/test.tsv"), "--model", f("m.bin"), "--output", f("pred.tsv")]),
        ("predict", ["--input", f("split/test.tsv"), "--model", f("m.bin"), "--format", "html",
                     "--output", f("pred.html")]),
        ("explain", ["--input", f("split/test.tsv"), "--model", f("m.bin"), "--output", f("ig.txt")]),
        ("explain", ["--input", f("split/test.tsv"), "--model", f("attn.bin"), "--method", "attention",
                     "--output", f("attn.tsv")]),
        ("explain", ["--input", f("split/test.tsv"), "--train", f("split/train.tsv"), "--method", "are",
                     "--output", f("are.tsv")]),
        ("augment", ["--input", f("split/train.tsv"), "--output", f("aug.tsv")]),
    ]
    summaries = []
    for cmd, argv in steps:
        import contextlib
        import io

        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            code = cli.main([cmd] + argv + common)
        assert code == 0, (cmd, argv)
        summaries.append(buf.getvalue().replace(str(root), "<root>"))
    return {cmd for cmd, _ in steps}, summaries


def test_ac12_cli_determinism(record, tmp_path):
    cmds, sa = _pipeline(tmp_path / "a", "5")
    _, sb = _pipeline(tmp_path / "b", "5")
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    differ = [str(p) for p in files_a if (tmp_path / "a" / p).read_bytes() != (tmp_path / "b" / p).read_bytes()]
    ok = files_a == files_b and not differ and sa == sb and len(cmds) == len(cli.COMMANDS)
    record(12, ok, f"CLI determinism: {len(cmds)} subcommands run twice with seed 5, {len(files_a)} output "
                   f"files compared, byte differences: {differ or 'none'}, summaries identical: {sa == sb}")
    assert ok
