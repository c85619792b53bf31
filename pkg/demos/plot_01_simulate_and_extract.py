"""
Synthetic plays and cornerback features
=======================================

Generate a small labeled corpus, look at one cornerback in man and one in
zone, and turn every (play, cornerback) pair into a 55-column feature row.
"""

import numpy as np

from manzone import SimConfig, extract_corpus_features, generate_corpus
from manzone.features import COLUMNS

corpus = generate_corpus(SimConfig(n_plays=200, rng_seed=1))
print(len(corpus), "plays")

# %%
# A man corner stays a few yards off the receiver it is assigned to; a zone
# corner drifts back to a spot and lets receivers come and go.

for lp in corpus[:6]:
    for cb, kind in lp.behavior.items():
        t = lp.play.track(cb)
        moved = np.hypot(t.x[-1] - t.x[0], t.y[-1] - t.y[0])
        print(f"play {lp.play.play_id:>3}  cb {cb}  {kind:<9} moved {moved:5.1f} yd")

# %%
# Eleven measurements over five time windows.

vectors = extract_corpus_features([lp.play for lp in corpus])
X = np.vstack([v.values for v in vectors])
print(X.shape, COLUMNS[:3])

# %%
# The ratio of the distance to the nearest receiver over that receiver's
# distance to the closest other defender separates the two looks already.

truth = {(lp.play.game_id, lp.play.play_id, cb): lab for lp in corpus for cb, lab in lp.truth.items()}
rat = X[:, COLUMNS.index("SNAP_TO_THROW__RAT_MEAN")]
is_man = np.array([truth[v.key] == "MAN" for v in vectors])
print("median ratio, man  %.2f" % np.median(rat[is_man]))
print("median ratio, zone %.2f" % np.median(rat[~is_man]))
