import random
from collections import Counter

import pytest

from spanlab import synth
from spanlab.corpus import (
    BioLabel,
    Post,
    SplitSpec,
    TagSequence,
    compute_stats,
    format_corpus,
    load_corpus,
    parse_corpus,
    save_corpus,
    spans_from_tags,
    stratified_split,
    tags_from_mask,
    toxic_runs,
)
from spanlab.errors import CorpusFormatError, SplitError
from spanlab.textproc import Domain, Token

O, B, I = BioLabel.O, BioLabel.B_TOXIC, BioLabel.I_TOXIC

ONE_POST = "#id p1\n#domain News\nab\t0\t2\tO\ncd\t3\t5\tB-TOXIC\nef\t6\t8\tI-TOXIC\n"


def test_load_one_post():
    (post,) = parse_corpus(ONE_POST)
    assert post.surfaces == ["ab", "cd", "ef"]
    assert post.gold.labels == (O, B, I)
    assert post.gold.valid
    assert post.normalized_text == "ab cd ef"


def test_invalid_gold_loads():
    (post,) = parse_corpus("#id p\n#domain News\nx\t0\t1\tI-TOXIC\n")
    assert not post.gold.valid


@pytest.mark.parametrize("bad", [
    "#id p\n#domain News\nx\t0\t1\tQ-TOXIC\n",
    "#id p\n#domain News\nx\t0\t1\tO\ny\t2\t3\n",
    "#id p\n#domain Nowhere\nx\t0\t1\tO\n",
    "#id p\n#domain News\nx\t0\t2\tO\n",
])
def test_parse_errors_have_line_numbers(bad):
    with pytest.raises(CorpusFormatError) as err:
        parse_corpus(bad)
    assert err.value.line is not None


def test_round_trip_synthetic(tmp_path):
    posts = synth.generate(seed=3, n_posts=100)
    path = tmp_path / "c.tsv"
    save_corpus(posts, path)
    first = path.read_bytes()
    save_corpus(load_corpus(path), path)
    assert path.read_bytes() == first
    assert load_corpus(path) == posts


def test_annotator_columns_round_trip():
    text = "#id p\n#domain YouTube\n#category insult\nx\t0\t1\tB-TOXIC\tO\tB-TOXIC\n"
    (post,) = parse_corpus(text)
    assert set(post.annotator_labels) == {"ann2", "ann3"}
    assert format_corpus([post]) == text


def test_spans_examples():
    toks = [Token("ab", 0, 2), Token("cd", 3, 5)]
    assert spans_from_tags(toks, [O, O]) == frozenset()
    assert spans_from_tags(toks, [B, I]) == frozenset({0, 1, 2, 3, 4})
    # orphan I still counts; B inside a run does not split it
    assert spans_from_tags(toks, [I, B]) == frozenset({0, 1, 2, 3, 4})


def _paint(tokens, tags):
    """Paint toxic tokens, then fill gaps strictly between consecutive toxic tokens."""
    painted = set()
    prev_end = None
    for tok, tag in zip(tokens, tags):
        if tag != O:
            if prev_end is not None:
                painted.update(range(prev_end, tok.char_start))
            painted.update(range(tok.char_start, tok.char_end))
            prev_end = tok.char_end
        else:
            prev_end = None
    return frozenset(painted)


def test_spans_painting_oracle():
    rng = random.Random(0)
    for _ in range(500):
        toks, pos = [], 0
        for _ in range(10):
            pos += rng.randint(0, 2)
            n = rng.randint(1, 4)
            toks.append(Token("x" * n, pos, pos + n))
            pos += n
        tags = [rng.choice([O, O, B, I]) for _ in toks]
        assert spans_from_tags(toks, tags) == _paint(toks, tags)


def test_spans_monotone_and_partition_recovery():
    rng = random.Random(1)
    for _ in range(200):
        toks = [Token("ab", 3 * i, 3 * i + 2) for i in range(8)]
        mask = [rng.random() < 0.4 for _ in toks]
        tags = tags_from_mask(mask)
        spans = spans_from_tags(toks, tags)
        recovered = [any(o in spans for o in range(t.char_start, t.char_end)) for t in toks]
        assert recovered == mask
        j = rng.randrange(8)
        more = list(tags.labels)
        more[j] = B if more[j] == O else more[j]
        assert spans <= spans_from_tags(toks, more)


def test_tags_from_mask_contiguity():
    assert tags_from_mask([True, True, False, True]).labels == (B, I, O, B)
    assert toxic_runs([O, B, I, O, I]) == [(1, 3), (4, 5)]


def _post(pid, dom, toxic, n=4):
    labels = (B,) + (O,) * (n - 1) if toxic else (O,) * n
    toks = tuple(Token("w", 2 * i, 2 * i + 1) for i in range(n))
    return Post(pid, dom, " ".join("w" * n), toks, TagSequence(labels))


def test_split_single_cell_sizes():
    posts = [_post(f"p{i}", Domain.NEWS, False) for i in range(100)]
    spec = SplitSpec(stratify_on=("domain",))
    tr, dv, te = stratified_split(posts, spec)
    assert (len(tr), len(dv), len(te)) == (80, 10, 10)


def test_split_cells_within_one(synth_posts):
    spec = SplitSpec()
    parts = stratified_split(synth_posts, spec)
    assert parts == stratified_split(synth_posts, spec)
    ids = [p.id for part in parts for p in part]
    assert sorted(ids) == sorted(p.id for p in synth_posts)
    cells = Counter((p.domain, p.is_toxic) for p in synth_posts)
    assert len(cells) == 6
    for part, frac in zip(parts, (spec.train_frac, spec.dev_frac, spec.test_frac)):
        got = Counter((p.domain, p.is_toxic) for p in part)
        for cell, n in cells.items():
            assert abs(got[cell] - frac * n) <= 1


def test_split_small_cell_error():
    posts = [_post(f"p{i}", Domain.NEWS, False) for i in range(10)] + [_post("t", Domain.NEWS, True)]
    with pytest.raises(SplitError, match="News"):
        stratified_split(posts, SplitSpec())


def test_split_fractions_checked():
    with pytest.raises(ValueError):
        SplitSpec(0.5, 0.2, 0.2)


def test_stats_trivial():
    st = compute_stats([])
    assert st.n_posts == 0 and st.n_spans == 0
    toks = tuple(Token("w", 2 * i, 2 * i + 1) for i in range(4))
    st = compute_stats([Post("a", Domain.NEWS, "w w w w", toks, TagSequence((O, B, I, O)))])
    assert st.n_spans == 1 and st.span_length == (2.0, 2, 2) and st.multi_span_fraction == 0.0


def test_stats_recount_oracle(synth_posts):
    st = compute_stats(synth_posts)
    spans, multi = [], 0
    for p in synth_posts:
        runs, cur = [], 0
        for lab in list(p.gold) + [O]:
            if lab != O:
                cur += 1
            elif cur:
                runs.append(cur)
                cur = 0
        spans += runs
        multi += len(runs) > 1
    assert st.n_spans == len(spans)
    assert st.span_length[1:] == (min(spans), max(spans))
    assert st.multi_span_fraction == pytest.approx(multi / len(synth_posts))
    for dom, c in st.per_domain.items():
        members = [p for p in synth_posts if p.domain.value == dom]
        assert c.samples == len(members)
        assert c.toxic_pct + c.non_toxic_pct == pytest.approx(100.0)
        assert c.toxic_pct == pytest.approx(100 * sum(p.is_toxic for p in members) / len(members))
    flat = Counter(lab for p in synth_posts for lab in p.gold)
    assert st.label_counts == {lab.tag: flat[lab] for lab in BioLabel}
