# %% [markdown]
# Train a small BiLSTM-CRF on the planted-lexicon synthetic corpus, then evaluate.

# %%
from spanlab import synth, corpus, trainer, metrics
from spanlab.labeler import EncoderConfig, LossConfig, predict

posts = synth.generate(seed=42, n_posts=600)
train, dev, test = corpus.stratified_split(posts, corpus.SplitSpec())
print(len(train), len(dev), len(test))
print(corpus.compute_stats(posts).to_lines()[:4])

# %%
params, log = trainer.train(train, dev, trainer.TrainConfig(max_epochs=8), LossConfig(),
                            EncoderConfig(embed_dim=16, hidden_dim=32))
print(log.to_text())

# %%
preds = predict(params, test)
print(metrics.format_table({"all": metrics.evaluate(test, preds), **metrics.breakdown(test, preds)}))

# %%
# domain weights for very unequal domains
print(trainer.domain_weights({"SocialMedia": 5254, "News": 4300, "YouTube": 4788}))
