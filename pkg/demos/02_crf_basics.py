# %% [markdown]
# Linear-chain CRF over O / B-TOXIC / I-TOXIC: partition, decoding, and the BIO constraint.

# %%
import itertools
import numpy as np
from spanlab.labeler.crf import crf_log_partition, crf_nll, viterbi_decode, marginals, sequence_score

rng = np.random.default_rng(0)
E = rng.normal(size=(4, 3))   # emissions, T x 3
trans = np.zeros((5, 3))      # rows: from O, B, I, START; row 4 is into STOP

# %%
# log Z against brute force over all 3^T paths
brute = np.log(sum(np.exp(sequence_score(E, trans, p)) for p in itertools.product(range(3), repeat=4)))
print(crf_log_partition(E, trans), brute)

# %%
# push I hard: the unconstrained decoder happily starts with I, the constrained one can't
E[:, 2] += 3
print("free       ", viterbi_decode(E, trans, constrain_bio=False)[0])
print("constrained", viterbi_decode(E, trans, constrain_bio=True)[0])

# %%
_, node, _ = marginals(E, trans, constrain_bio=True)
print(np.round(node, 3))
print("nll of B I I I:", crf_nll(E, trans, [1, 2, 2, 2], constrain_bio=True))
