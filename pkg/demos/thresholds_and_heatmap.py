"""
Where the constraints bite
==========================

Thresholds can be set relative to least squares (tau) or to the Lasso
(gamma).  Small tau asks for too much and the problem becomes infeasible;
large tau leaves the constraints idle and the fit is the Lasso.  The heatmap
shows a coefficient over both knobs.
"""

import numpy as np

from csclasso import GroupedDataset
from csclasso.path import default_axes, heatmap_grid
from csclasso.thresholds import compute_tau_max, compute_tau_min

rng = np.random.default_rng(1)
n = 60
z = rng.standard_normal(n)
half = n // 2
# two halves that disagree about the slope
y = np.where(np.arange(n) < half, 2.0 * z + 1.0, -z) + 0.3 * rng.standard_normal(n)
data = GroupedDataset.from_predictors(z, y, [np.arange(half), np.arange(half, n)])

print("tau_min (per-group OLS baseline)  %.4f" % compute_tau_min(data, baseline="per_group"))
print("tau_min (global OLS baseline)     %.4f" % compute_tau_min(data))
for lam in (0.1, 0.5, 1.0):
    print("tau_max at lam=%.1f                %.4f" % (lam, compute_tau_max(data, lam)))

lam_axis, tau_axis = default_axes(data, n_lambda=6, n_tau=5)
hm = heatmap_grid(data, lam_axis, tau_axis)
slope = hm.coefficient(1)

print("\nslope coefficient, rows = lambda, columns = tau")
print("lambda  " + " ".join("%8.3f" % t for t in tau_axis))
for lam, row in zip(lam_axis, slope):
    print("%6.3f  " % lam + " ".join("%8.3f" % v for v in row))
