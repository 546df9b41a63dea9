"""Linear-chain CRF over the three BIO labels.

Transition scores live in one ``(5, 3)`` matrix::

    rows 0..2  from label O, B, I
    row  3     from the virtual START state
    row  4     into STOP (row 4, column j scores ``j -> STOP``)

Columns are the destination labels O, B, I.  Label indices follow
``BioLabel`` (O=0, B=1, I=2).
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from ..errors import NonFiniteError

N_LABELS = 3
START = 3
STOP = 4
O, B, I = 0, 1, 2

# Large negative sentinel for forbidden transitions inside partitions; the
# decoder uses -inf so no emission magnitude can override the constraint.
FORBIDDEN = -1e4


def bio_mask(value: float = FORBIDDEN) -> np.ndarray:
    mask = np.zeros((5, N_LABELS))
    mask[START, I] = value
    mask[O, I] = value
    return mask


def effective_transitions(transitions: np.ndarray, constrain_bio: bool, value: float = FORBIDDEN) -> np.ndarray:
    return transitions + bio_mask(value) if constrain_bio else transitions


def _check(emissions: np.ndarray):
    emissions = np.asarray(emissions, dtype=np.float64)
    if emissions.ndim != 2 or emissions.shape[1] != N_LABELS or emissions.shape[0] < 1:
        raise ValueError(f"emissions must be (T>=1, 3), got {emissions.shape}")
    if not np.all(np.isfinite(emissions)):
        raise NonFiniteError("non-finite emission score", name="emissions")
    return emissions


def sequence_score(emissions, transitions, labels) -> float:
    """Unnormalized log-score of one label path (START and STOP included)."""
    labels = [int(x) for x in labels]
    score = transitions[START, labels[0]] + emissions[0, labels[0]]
    for t in range(1, len(labels)):
        score += transitions[labels[t - 1], labels[t]] + emissions[t, labels[t]]
    return float(score + transitions[STOP, labels[-1]])


def forward(emissions, transitions) -> np.ndarray:
    """Log forward table: ``alpha[t, j]`` sums paths ending in j at t (emission included)."""
    T = emissions.shape[0]
    alpha = np.empty((T, N_LABELS))
    alpha[0] = transitions[START] + emissions[0]
    core = transitions[:N_LABELS]
    for t in range(1, T):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + core, axis=0) + emissions[t]
    return alpha


def backward(emissions, transitions) -> np.ndarray:
    """Log backward table: ``beta[t, i]`` sums suffixes after t given label i at t (STOP included)."""
    T = emissions.shape[0]
    beta = np.empty((T, N_LABELS))
    beta[T - 1] = transitions[STOP]
    core = transitions[:N_LABELS]
    for t in range(T - 2, -1, -1):
        beta[t] = logsumexp(core + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def crf_log_partition(emissions, transitions, constrain_bio: bool = False) -> float:
    """log Z: log-sum-exp of every label path's score, by the forward algorithm."""
    emissions = _check(emissions)
    trans = effective_transitions(np.asarray(transitions, dtype=np.float64), constrain_bio)
    alpha = forward(emissions, trans)
    return float(logsumexp(alpha[-1] + trans[STOP]))


def crf_nll(emissions, transitions, gold, constrain_bio: bool = False) -> float:
    emissions = _check(emissions)
    trans = effective_transitions(np.asarray(transitions, dtype=np.float64), constrain_bio)
    if len(gold) != emissions.shape[0]:
        raise ValueError("gold length differs from emissions")
    log_z = float(logsumexp(forward(emissions, trans)[-1] + trans[STOP]))
    return log_z - sequence_score(emissions, trans, gold)


def marginals(emissions, transitions, constrain_bio: bool = False):
    """Node and edge posteriors plus log Z.

    Returns ``(log_z, node[T, 3], edge[T-1, 3, 3])`` where
    ``edge[t, i, j] = P(y_t = i, y_{t+1} = j)``.
    """
    emissions = _check(emissions)
    trans = effective_transitions(np.asarray(transitions, dtype=np.float64), constrain_bio)
    alpha = forward(emissions, trans)
    beta = backward(emissions, trans)
    log_z = float(logsumexp(alpha[-1] + trans[STOP]))
    node = np.exp(alpha + beta - log_z)
    core = trans[:N_LABELS]
    edge = np.exp(alpha[:-1, :, None] + core[None] + (emissions[1:] + beta[1:])[:, None, :] - log_z)
    return log_z, node, edge


def crf_nll_grad(emissions, transitions, gold, constrain_bio: bool = False):
    """NLL with its gradients w.r.t. emissions ``(T, 3)`` and transitions ``(5, 3)``.

    The gradient is expected feature counts under the model minus the gold
    path's counts.  The BIO mask is a constant offset, so gradients flow to
    the underlying (unmasked) parameters unchanged.
    """
    emissions = _check(emissions)
    trans = effective_transitions(np.asarray(transitions, dtype=np.float64), constrain_bio)
    gold = [int(x) for x in gold]
    log_z, node, edge = marginals(emissions, transitions, constrain_bio)
    nll = log_z - sequence_score(emissions, trans, gold)

    d_emit = node.copy()
    d_trans = np.zeros((5, N_LABELS))
    d_trans[:N_LABELS] = edge.sum(axis=0)
    d_trans[START] = node[0]
    d_trans[STOP] = node[-1]

    T = len(gold)
    d_emit[np.arange(T), gold] -= 1.0
    d_trans[START, gold[0]] -= 1.0
    d_trans[STOP, gold[-1]] -= 1.0
    for t in range(1, T):
        d_trans[gold[t - 1], gold[t]] -= 1.0
    return nll, d_emit, d_trans


def viterbi_decode(emissions, transitions, constrain_bio: bool = True):
    """Best-scoring path and its score.

    With ``constrain_bio`` the START->I and O->I transitions are removed
    outright, so the result is always BIO-valid.  Ties go to the lowest
    label index (O < B < I) at every backpointer.
    """
    emissions = _check(emissions)
    trans = effective_transitions(np.asarray(transitions, dtype=np.float64), constrain_bio, -np.inf)
    T = emissions.shape[0]
    core = trans[:N_LABELS]
    score = trans[START] + emissions[0]
    back = np.zeros((T, N_LABELS), dtype=np.int64)
    for t in range(1, T):
        cand = score[:, None] + core
        back[t] = np.argmax(cand, axis=0)
        score = cand[back[t], np.arange(N_LABELS)] + emissions[t]
    final = score + trans[STOP]
    best = int(np.argmax(final))
    path = [best]
    for t in range(T - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return path, float(final[best])


def toxicity_score_grad(emissions, transitions, constrain_bio: bool = True, toxic=(B, I)):
    """Mean posterior toxic mass per token and its gradient w.r.t. emissions.

    ``F = (1/T) * E[N]`` where ``N`` counts tokens labeled toxic.  Because
    node marginals are derivatives of log Z, ``dF/de[s, y]`` is the
    covariance ``(1/T) * (E[N * 1{y_s = y}] - E[N] * P(y_s = y))``; the
    first moment is carried through forward and backward passes in log space.
    """
    emissions = _check(emissions)
    trans = effective_transitions(np.asarray(transitions, dtype=np.float64), constrain_bio)
    T = emissions.shape[0]
    c = np.zeros(N_LABELS)
    c[list(toxic)] = 1.0
    log_c = np.where(c > 0, 0.0, -np.inf)
    core = trans[:N_LABELS]

    alpha = forward(emissions, trans)
    beta = backward(emissions, trans)
    log_z = float(logsumexp(alpha[-1] + trans[STOP]))

    with np.errstate(divide="ignore"):
        # a[t, j]: paths ending in j at t, each weighted by its toxic count so far
        a = np.full((T, N_LABELS), -np.inf)
        a[0] = log_c + alpha[0]
        for t in range(1, T):
            carried = logsumexp(a[t - 1][:, None] + core, axis=0) + emissions[t]
            a[t] = np.logaddexp(carried, log_c + alpha[t])
        # b[t, i]: suffixes after t, each weighted by its toxic count after t
        b = np.full((T, N_LABELS), -np.inf)
        for t in range(T - 2, -1, -1):
            nxt = np.logaddexp(b[t + 1], log_c + beta[t + 1]) + emissions[t + 1]
            b[t] = logsumexp(core + nxt[None, :], axis=1)

    node = np.exp(alpha + beta - log_z)
    expected_n = float((node * c).sum())
    joint = np.exp(np.logaddexp(a + beta, alpha + b) - log_z)
    grad = (joint - expected_n * node) / T
    return expected_n / T, grad
