"""A small replication study across privacy budgets and noise mechanisms.

For each (snr, epsilon) cell, replicated datasets are scored by the
oracle and by the Laplace/Wishart mechanisms with and without hard
thresholding; the table reports mean prediction MSE of the model-averaged
fit and the mean normalized distance of the inclusion probabilities from
the oracle's.
"""

import collections

import numpy as np

from dpms.datagen import SimStudyConfig
from dpms.harness import DP_METHODS, mse_study_cell
from dpms.linmodel import GPriorSpec

REPS = 20  # increase for smoother tables

print(f"{'snr':>4} {'eps':>5} {'method':>7} {'mean MSE':>10} {'incl dist':>10}")
for snr in (0.2, 1.0):
    for eps in (0.1, 1.0):
        cfg = SimStudyConfig(p=6, n=10_000, snr=snr, n_active=3,
                             n_datasets=REPS, seed=515)
        recs = mse_study_cell(cfg, eps, stat=GPriorSpec.sample_size())
        mse = collections.defaultdict(list)
        dist = collections.defaultdict(list)
        for r in recs:
            mse[r.method].append(r.mse)
            dist[r.method].append(r.inclusion_l2)
        for method in ("O",) + DP_METHODS:
            print(f"{snr:4.1f} {eps:5.1f} {method:>7} "
                  f"{np.mean(mse[method]):10.2e} {np.mean(dist[method]):10.3f}")

print("\nExpected patterns: the oracle always wins; private MSEs shrink as")
print("epsilon grows; thresholded variants (LMT/WMT) win at small epsilon")
print("and lose their edge at large epsilon.")
