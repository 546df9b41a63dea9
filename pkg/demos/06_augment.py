# %% [markdown]
# Label-preserving augmentation: synonyms, masking, code-switching. Toxic tokens never move.

# %%
import numpy as np
from spanlab.corpus import parse_corpus
from spanlab.augment import (AugmentConfig, SynonymConfig, MaskingConfig, CodeSwitchConfig,
                             augment_corpus, mask_tokens)

text = """#id a1
#domain SocialMedia
yaar	0	4	O
tum	5	8	O
bohat	9	14	O
ganda	15	20	B-TOXIC
insaan	21	27	I-TOXIC
ho	28	30	O
acha	31	35	O
"""
(post,) = parse_corpus(text)

# %%
cfg = AugmentConfig(SynonymConfig(enabled=True, replace_frac=(0.5, 0.5)),
                    MaskingConfig(enabled=True, mask_prob=0.2),
                    CodeSwitchConfig(enabled=True, sample_frac=1.0), seed=3)
for i in range(4):
    out = augment_corpus([post], AugmentConfig(cfg.synonym, cfg.masking, cfg.codeswitch, seed=i))[0]
    print(out.normalized_text, [l.tag for l in out.gold])

# %%
# empirical mask rate
rng = np.random.default_rng(0)
n = sum(s == "[MASK]" for _ in range(2000) for s in mask_tokens(post, MaskingConfig(), rng).surfaces)
print(n / (2000 * 5))
