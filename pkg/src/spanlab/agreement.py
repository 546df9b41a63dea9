"""Inter-annotator agreement over token-level BIO labels.

Units are tokens.  For a corpus, the label columns of each post are read as
annotators: the gold column is annotator 1 and every extra column in the
token-per-line file is a further annotator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .errors import AgreementUndefined


@dataclass(frozen=True)
class KappaResult:
    kappa: float
    p_o: float
    p_e: float


def cohen_kappa(a1: Sequence[Hashable], a2: Sequence[Hashable]) -> KappaResult:
    if len(a1) != len(a2):
        raise ValueError("annotation sequences differ in length")
    if not a1:
        raise ValueError("need at least one unit")
    n = len(a1)
    cats = sorted(set(a1) | set(a2), key=repr)
    p_o = sum(x == y for x, y in zip(a1, a2)) / n
    p_e = sum((list(a1).count(c) / n) * (list(a2).count(c) / n) for c in cats)
    if p_e >= 1.0:
        raise AgreementUndefined("chance agreement is 1; kappa undefined", p_o=p_o)
    return KappaResult((p_o - p_e) / (1.0 - p_e), p_o, p_e)


def coincidence_matrix(annotations: Sequence[Sequence[Hashable | None]]):
    """Nominal coincidence matrix over units with >= 2 values.

    ``annotations[a][u]`` is annotator ``a``'s value for unit ``u``; ``None``
    marks a missing value.  Each unit with ``m`` values adds ``1/(m-1)`` for
    every ordered pair of values from different annotators.
    """
    if len(annotations) < 2:
        raise ValueError("need at least two annotators")
    n_units = len(annotations[0])
    if any(len(a) != n_units for a in annotations):
        raise ValueError("annotators cover different numbers of units")
    values = sorted({v for a in annotations for v in a if v is not None}, key=repr)
    index = {v: i for i, v in enumerate(values)}
    o = np.zeros((len(values), len(values)))
    for u in range(n_units):
        present = [index[a[u]] for a in annotations if a[u] is not None]
        m = len(present)
        if m < 2:
            continue
        for i in range(m):
            for j in range(m):
                if i != j:
                    o[present[i], present[j]] += 1.0 / (m - 1)
    return values, o


def krippendorff_alpha(annotations: Sequence[Sequence[Hashable | None]]) -> float:
    """Nominal-data alpha from the observed and expected coincidence matrices."""
    _, o = coincidence_matrix(annotations)
    n_c = o.sum(axis=1)
    n = n_c.sum()
    if n == 0:
        raise AgreementUndefined("no unit carries two or more values")
    off = ~np.eye(len(n_c), dtype=bool)
    disagree_obs = o[off].sum()
    expected = np.outer(n_c, n_c)[off].sum() / (n - 1)
    if expected == 0:
        raise AgreementUndefined("only one category used; alpha undefined")
    return float(1.0 - disagree_obs / expected)


@dataclass(frozen=True)
class Disagreement:
    post_id: str
    positions: tuple[int, ...]

    @property
    def count(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class AgreementReport:
    kappa: float | None
    alpha: float | None
    p_o: float
    p_e: float
    n_units: int
    disagreements: tuple[Disagreement, ...]

    def to_lines(self) -> list[str]:
        fmt = lambda x: "nan" if x is None else f"{x:.6f}"  # noqa: E731
        return [f"kappa={fmt(self.kappa)}", f"alpha={fmt(self.alpha)}",
                f"p_o={self.p_o:.6f}", f"p_e={self.p_e:.6f}", f"units={self.n_units}",
                f"posts_with_disagreement={len(self.disagreements)}"]


def annotator_sequences(post) -> list[list[int]]:
    seqs = []
    if post.gold is not None:
        seqs.append([int(x) for x in post.gold])
    for name in sorted(post.annotator_labels):
        seqs.append([int(x) for x in post.annotator_labels[name]])
    return seqs


def disagreement_report(posts) -> list[Disagreement]:
    """Token positions where any two annotators differ, most-contested posts first."""
    out = []
    for post in posts:
        seqs = annotator_sequences(post)
        if len(seqs) < 2:
            continue
        positions = tuple(i for i in range(len(post.tokens)) if len({s[i] for s in seqs}) > 1)
        if positions:
            out.append(Disagreement(post.id, positions))
    # stable sort keeps corpus order among equal counts
    return sorted(out, key=lambda d: -d.count)


def agreement_report(posts) -> AgreementReport:
    """Kappa between the first two annotators and alpha over all of them."""
    multi = [p for p in posts if len(annotator_sequences(p)) >= 2]
    if not multi:
        raise ValueError("no post carries two or more annotator label columns")
    width = max(len(annotator_sequences(p)) for p in multi)
    columns: list[list] = [[] for _ in range(width)]
    for post in multi:
        seqs = annotator_sequences(post)
        for a in range(width):
            columns[a].extend(seqs[a] if a < len(seqs) else [None] * len(post.tokens))
    first, second = columns[0], columns[1]
    pairs = [(x, y) for x, y in zip(first, second) if x is not None and y is not None]
    kappa = None
    try:
        res = cohen_kappa([x for x, _ in pairs], [y for _, y in pairs])
        kappa, p_o, p_e = res.kappa, res.p_o, res.p_e
    except AgreementUndefined as exc:
        p_o, p_e = exc.p_o, 1.0
    try:
        alpha = krippendorff_alpha(columns)
    except AgreementUndefined:
        alpha = None
    return AgreementReport(kappa, alpha, p_o, p_e, len(first), tuple(disagreement_report(multi)))
