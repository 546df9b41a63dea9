# %% [markdown]
# Normalizing mixed-script posts and keeping offsets back to the raw text.

# %%
from spanlab.textproc import PipelineConfig, Step, normalize, original_span, tokenize, dedup
from spanlab.corpus import post_from_raw
from spanlab.textproc import RawText, Domain

raw = "Tum bohat BURE ho!!! dekho http://x.co/abc"
text, omap = normalize(raw)
print(repr(text))

# %%
# every normalized char points at a raw char
for tok in tokenize(text):
    lo, hi = original_span(omap, tok.char_start, tok.char_end, raw)
    print(f"{tok.surface!r:>12}  raw[{lo}:{hi}] = {raw[lo:hi]!r}")

# %%
# switch transliteration off to see the Roman text after cleaning only
latin = PipelineConfig(steps=tuple(s for s in PipelineConfig().steps if s is not Step.ROMAN_TO_NASTALIQ))
print(normalize(raw, latin)[0])

# %%
# near-duplicates collapse at similarity >= 0.8
posts = [post_from_raw(RawText(t, f"r{i}", Domain.NEWS), latin)
         for i, t in enumerate(["aaj ki khabar acha hai", "aaj ki khabar achha hai", "kal milte hain"])]
print([p.id for p in dedup(posts, 0.8)])
