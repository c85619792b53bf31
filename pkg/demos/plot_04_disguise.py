"""
Reading a disguised zone
========================

One model per time window. A zone corner that lines up in press looks like
man before the snap and like zone once the ball is out.
"""

from manzone import SimConfig, extract_corpus_features, generate_corpus
from manzone.reports import coverage_timeline, fit_window_models, format_timeline

train = generate_corpus(SimConfig())
models = fit_window_models(extract_corpus_features([lp.play for lp in train]))

disguised = generate_corpus(SimConfig(n_plays=5, man_fraction=0.0, disguise_rate=1.0, rng_seed=99))
lp = disguised[0]
for cb in lp.truth:
    print(format_timeline(coverage_timeline(lp.play, cb, models)))

# %%
# Across more plays.

many = generate_corpus(SimConfig(n_plays=100, man_fraction=0.0, disguise_rate=1.0, rng_seed=7))
hits = total = 0
for lp in many:
    for cb in lp.truth:
        tl = coverage_timeline(lp.play, cb, models)
        hits += tl.entry("PRE_SNAP").p_man > 0.5 and tl.entry("THROW_TO_END").p_zone > 0.8
        total += 1
print(f"{hits}/{total} read man before the snap and zone after the throw")
