# %% [markdown]
# Inter-annotator agreement on the bundled demo corpus (gold plus one extra annotator).

# %%
from spanlab.corpus import load_corpus
from spanlab.agreement import agreement_report, cohen_kappa, krippendorff_alpha
from spanlab.textproc import _data_path

posts = load_corpus(_data_path("demo_corpus.tsv"))
rep = agreement_report(posts)
print("\n".join(rep.to_lines()))
for d in rep.disagreements:
    print(d.post_id, d.positions)

# %%
# the small textbook case
print(krippendorff_alpha([["O", "B", "O", "B"], ["O", "O", "B", "B"]]))
print(cohen_kappa([0] * 5 + [1] * 5, [0] * 5 + [1] * 4 + [0]))
