import random
import re

import numpy as np
import pytest

from spanlab.corpus import BioLabel, Post, TagSequence
from spanlab.metrics import (
    breakdown,
    corpus_span_f1,
    evaluate,
    invalid_bio_rate,
    span_prf,
    token_prf,
)
from spanlab.textproc import Domain, Token


def test_span_examples():
    assert tuple(span_prf({1, 2}, {1, 2})) == (1.0, 1.0, 1.0)
    assert tuple(span_prf(range(3, 11), range(5, 13))) == (0.75, 0.75, 0.75)
    assert tuple(span_prf(set(), set())) == (1.0, 1.0, 1.0)
    assert tuple(span_prf(set(), {1})) == (0.0, 0.0, 0.0)


def _bitmap(pred, gold, n=64):
    p = np.zeros(n, bool)
    g = np.zeros(n, bool)
    p[list(pred)] = True
    g[list(gold)] = True
    if not p.any() and not g.any():
        return 1.0, 1.0, 1.0
    if not p.any() or not g.any():
        return 0.0, 0.0, 0.0
    hit = (p & g).sum()
    P, R = hit / p.sum(), hit / g.sum()
    return P, R, (2 * P * R / (P + R) if hit else 0.0)


def test_span_bitmap_oracle_and_swap():
    rng = random.Random(0)
    for _ in range(1000):
        pred = {i for i in range(64) if rng.random() < rng.random() * 0.3}
        gold = {i for i in range(64) if rng.random() < rng.random() * 0.3}
        got = span_prf(pred, gold)
        assert tuple(got) == pytest.approx(_bitmap(pred, gold), abs=1e-15)
        assert span_prf(gold, pred).f1 == pytest.approx(got.f1)


def test_span_monotone_in_correct_characters():
    rng = random.Random(1)
    for _ in range(200):
        gold = {i for i in range(30) if rng.random() < 0.4}
        pred = {i for i in range(30) if rng.random() < 0.4}
        missing = sorted(gold - pred)
        if missing:
            assert span_prf(pred | {missing[0]}, gold).f1 >= span_prf(pred, gold).f1


def test_corpus_macro_average_and_order_invariance():
    rng = random.Random(2)
    preds = [{i for i in range(20) if rng.random() < 0.3} for _ in range(30)]
    golds = [{i for i in range(20) if rng.random() < 0.3} for _ in range(30)]
    want = sum(span_prf(p, g).f1 for p, g in zip(preds, golds)) / 30
    assert corpus_span_f1(preds, golds).f1 == pytest.approx(want)
    order = list(range(30))
    rng.shuffle(order)
    assert corpus_span_f1([preds[i] for i in order], [golds[i] for i in order]).f1 == pytest.approx(want)
    assert corpus_span_f1([set()] * 3, [set()] * 3).f1 == 1.0
    with pytest.raises(ValueError):
        corpus_span_f1([set()], [])


def test_token_examples():
    r = token_prf([[0, 1, 0, 0]], [[0, 1, 2, 0]])
    assert (r.precision, r.recall) == (1.0, 0.5)
    assert r.f1 == pytest.approx(2 / 3)
    assert tuple(token_prf([[0, 0]], [[1, 2]])) == (0.0, 0.0, 0.0)
    r = token_prf([[0, 0]], [[0, 0]])
    assert r.f1 == 1.0 and r.degenerate


def test_token_confusion_oracle():
    rng = random.Random(3)
    preds = [[rng.choice([0, 0, 1, 2]) for _ in range(rng.randint(1, 12))] for _ in range(50)]
    golds = [[rng.choice([0, 0, 1, 2]) for _ in p] for p in preds]
    flat_p = np.array([x > 0 for p in preds for x in p])
    flat_g = np.array([x > 0 for g in golds for x in g])
    tp, fp, fn = (flat_p & flat_g).sum(), (flat_p & ~flat_g).sum(), (~flat_p & flat_g).sum()
    r = token_prf(preds, golds)
    assert (r.tp, r.fp, r.fn) == (tp, fp, fn)
    assert r.f1 == pytest.approx(2 * tp / (2 * tp + fp + fn))


def test_invalid_bio_examples_and_regex_oracle():
    assert invalid_bio_rate([[0, 1, 2]] * 4) == 0.0
    assert invalid_bio_rate([[0, 1, 2], [1], [0, 2], [0]]) == 0.25
    rng = random.Random(4)
    seqs = [[rng.randrange(3) for _ in range(rng.randint(1, 8))] for _ in range(500)]
    bad = sum(bool(re.search(r"^I|OI", "".join("OBI"[x] for x in s))) for s in seqs)
    assert invalid_bio_rate(seqs) == bad / 500


def _post(pid, dom, gold, category=None):
    toks = tuple(Token("ab", 3 * i, 3 * i + 2) for i in range(len(gold)))
    text = " ".join(["ab"] * len(gold))
    return Post(pid, dom, text, toks, TagSequence(tuple(BioLabel(g) for g in gold)), category=category)


def test_gold_as_prediction_is_perfect():
    posts = [_post("a", Domain.NEWS, [0, 1, 2]), _post("b", Domain.YOUTUBE, [0, 0])]
    rep = evaluate(posts, [p.gold for p in posts])
    assert rep.span_f1 == rep.token_f1 == 1.0 and rep.invalid_bio_rate == 0.0


def test_breakdown_groups():
    posts = [_post("a", Domain.NEWS, [0, 1, 2], "insult"), _post("b", Domain.NEWS, [1, 0]),
             _post("c", Domain.YOUTUBE, [0, 1], "insult")]
    preds = [[0, 1, 0], [1, 0], [0, 0]]
    by_dom = breakdown(posts, preds, "domain")
    assert set(by_dom) == {"News", "YouTube"}
    assert by_dom["News"] == evaluate(posts[:2], preds[:2])
    assert by_dom["YouTube"].token_f1 == 0.0
    by_cat = breakdown(posts, preds, "category")
    assert set(by_cat) == {"insult", "Other"} and by_cat["Other"].n_posts == 1
    single = breakdown(posts[:2], preds[:2], "domain")
    assert single["News"] == evaluate(posts[:2], preds[:2])


def test_per_class_report_lines():
    posts = [_post("a", Domain.NEWS, [0, 1, 2])]
    rep = evaluate(posts, [[0, 1, 1]], per_class=True)
    assert rep.per_class["I-TOXIC"].recall == 0.0
    assert "class.B-TOXIC.p=0.500000" in rep.to_lines()
