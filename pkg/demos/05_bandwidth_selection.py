# %%
"""
====================================
Cross-validated bandwidth selection
====================================

Leave-one-out prediction of each observation's own indicator at the pooled
deciles, for a ladder of bandwidths around the rule of thumb.
"""

import numpy as np

from spatial_ksample import KernelSpec, ScenarioSpec, generate_dataset, rule_of_thumb_bandwidth
from spatial_ksample.kernels import cv_scores, select_bandwidth_cv

data = generate_dataset(ScenarioSpec(n_i=(100, 100), field_model="moving_average",
                                     field_range=0.1, seed=6))
kernel = KernelSpec("epanechnikov")
base = rule_of_thumb_bandwidth(data).value
ladder = [base * f for f in (0.125, 0.25, 0.5, 1, 2, 4)]

# %%
for s in cv_scores(data, kernel, ladder):
    print(f"lambda={s.bandwidth:.3f}  score={s.score:.5f}  used={s.used}")
print("selected:", round(select_bandwidth_cv(data, kernel, ladder).value, 3))
