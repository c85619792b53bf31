"""
How many clusters?
==================

Leave-one-week-out agreement between a model fitted without a week and one
fitted on that week alone, averaged over weeks, for G = 2 to 6.
"""

from manzone import FitConfig, SimConfig, extract_corpus_features, generate_corpus, select_g
from manzone.evaluation import FeatureTable

corpus = generate_corpus(SimConfig())
table = FeatureTable.from_vectors(extract_corpus_features([lp.play for lp in corpus]))

report = select_g(table, range(2, 7), FitConfig(n_restarts=3))
for row in report.rows:
    print(f"G={row.n_components}  {row.mean_ari:.3f}  " + " ".join(f"{v:.2f}" for v in row.week_ari.values()))
print("chosen:", report.best_g)

# %%
# Two clusters agree with themselves from week to week; more clusters start
# splitting man or zone along whatever happens to vary in a given week.
