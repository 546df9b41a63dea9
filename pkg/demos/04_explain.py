# %% [markdown]
# Integrated gradients on a trained labeler and an ARE rationale model from post labels only.

# %%
from spanlab import synth, corpus, trainer, explain, metrics
from spanlab.labeler import EncoderConfig, LossConfig

posts = synth.generate(seed=42, n_posts=600)
train, dev, test = corpus.stratified_split(posts, corpus.SplitSpec())
enc = EncoderConfig(embed_dim=16, hidden_dim=32)
params, _ = trainer.train(train, dev, trainer.TrainConfig(max_epochs=8), LossConfig(), enc)

# %%
post = next(p for p in test if p.is_toxic)
amap = explain.integrated_gradients(params, post, steps=100)
print("\n".join(amap.to_lines()))
print(explain.render_highlights(post, amap))       # ANSI heat levels
print(explain.render_highlights(post, post.gold))  # gold span

# %%
# completeness gap shrinks with more steps
for m in (5, 20, 100):
    print(m, explain.integrated_gradients(params, post, steps=m).relative_residual)

# %%
are = explain.are_train(train, explain.RationaleConfig(), enc)
tags = [explain.are_extract(are, p) for p in test]
print("ARE token F1", metrics.evaluate(test, tags).token_f1)
print(explain.render_highlights(post, explain.are_extract(are, post)))
