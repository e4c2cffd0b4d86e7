"""
How far to push lambda
======================

With active constraints the path does not shrink to the intercept.  It
settles on the feasible point of smallest L1 norm, and the doubling search
finds the lambda after which nothing changes.
"""

import numpy as np

from csclasso import ProblemSpec, group_mse, solve_lasso_cd, solve_ols
from csclasso import GroupedDataset
from csclasso.path import build_lambda_grid, find_lambda_star_dynamic, solve_path

rng = np.random.default_rng(3)
Z = rng.standard_normal((120, 5))
y = Z @ [1.0, 0.0, -0.7, 0.0, 0.3] + rng.standard_normal(120)
data = GroupedDataset.from_predictors(Z, y, [np.arange(40)])

# a bound 30% of the way from the group's own least-squares error to its variance
yl, _ = data.group_data(0)
floor = group_mse(data, solve_ols(data.with_objective_rows(data.groups[0])))[0]
ceiling = np.mean((yl - yl.mean()) ** 2)
spec = ProblemSpec(data, 0.0, [floor + 0.3 * (ceiling - floor)])

star = find_lambda_star_dynamic(spec)
print("lambda* = %.4f after %d doublings" % (star.lambda_star, len(star.grid)))
print("limit beta(inf):", np.round(star.beta_inf, 4))

# the distance decays roughly like 1/lambda, so a doubling grid shows it best
grid = build_lambda_grid(star.lambda_star, scale="doubling", visited=star.grid)
path = solve_path(spec, grid[::2])
print("\n   lambda   |beta - beta(inf)|   group MSE   plain Lasso nonzeros")
for lam, beta in zip(path.lambdas, path.betas):
    nz = int(np.sum(solve_lasso_cd(data, lam).beta[1:] != 0))
    print("%9.4f   %14.5f   %9.4f   %d" % (lam, np.linalg.norm(beta - star.beta_inf),
                                           group_mse(data, beta)[0], nz))
print("stopping tolerance epsilon = %.1e" % star.epsilon)
