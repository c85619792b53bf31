"""
Two clusters, named by the data
===============================

Fit a two-component Gaussian mixture to all 55 features, name the components
from their mean receiver ratio and compare against the generator's labels.
"""

import numpy as np

from manzone import FitConfig, SimConfig, ari, extract_corpus_features, fit, generate_corpus, label_model
from manzone.evaluation import FeatureTable, model_semantics
from manzone.synthetic import truth_labels

corpus = generate_corpus(SimConfig())
table = FeatureTable.from_vectors(extract_corpus_features([lp.play for lp in corpus]))

model = label_model(fit(table.values, FitConfig(n_components=2), feature_names=table.names))
sem = model_semantics(model)
print(sem.mapping, sem.status)

# %%
# Hard labels against the truth the generator kept.

truth = truth_labels(corpus)
assigned = model.assign_labels(table.values)
named = [sem.mapping[g] for g in assigned]
print("ARI %.3f" % ari(named, [truth[k] for k in table.ids]))

# %%
# Soft memberships. With all 55 features the model is rarely unsure: nearly
# every corner sits at 0 or 1, including most hybrid zone corners.

p_zone = model.predict_proba(table.values)[:, sem.component_for("ZONE")]
print(np.histogram(p_zone, bins=5, range=(0, 1))[0])
