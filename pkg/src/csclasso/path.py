"""Regularization grids, warm-started solution paths and (lambda, tau) heat maps."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .baselines import lasso_lambda_star
from .exceptions import BudgetExceededError, InfeasibleError, PreconditionError
from .model import GroupedDataset, ProblemSpec, SolverConfig, Status
from .solver import solve_csclasso, solve_min_l1_feasible
from .thresholds import compute_tau_max, compute_tau_min, thresholds_from_tau

START_LAMBDA = 2.0 ** -5
MAX_DOUBLINGS = 60
# offset above tau_min for the default tau axis: exactly at tau_min the feasible set
# can collapse to a point with no KKT multipliers, which stalls the solver
TAU_MIN_MARGIN = 1e-3


@dataclass(frozen=True, eq=False)
class PathResult:
    lambdas: np.ndarray
    betas: np.ndarray          # one row per lambda
    objectives: np.ndarray
    statuses: tuple
    fits: tuple = ()

    def __len__(self):
        return len(self.lambdas)


@dataclass(frozen=True, eq=False)
class LambdaStarResult:
    """Outcome of the doubling search.

    ``grid`` lists every visited value ``2^-5, 2^-4, ..., lambda_star`` and
    ``betas`` the matching fits.
    """

    lambda_star: float
    grid: np.ndarray
    betas: np.ndarray
    beta_inf: np.ndarray
    epsilon: float


@dataclass(frozen=True, eq=False)
class HeatmapGrid:
    lambda_axis: np.ndarray
    tau_axis: np.ndarray
    beta_cube: np.ndarray           # (lambda, tau, p + 1); NaN where infeasible
    infeasible_mask: np.ndarray     # (lambda, tau)
    statuses: np.ndarray            # (lambda, tau) status strings

    def coefficient(self, j):
        """``lambda x tau`` slice of coefficient ``j``."""
        return self.beta_cube[:, :, j]


def _with_warm(cfg, beta):
    return replace(cfg, warm_start=None if beta is None else np.array(beta, dtype=float))


def find_lambda_star_dynamic(spec: ProblemSpec, epsilon=None, cfg: SolverConfig = None,
                             max_doublings=MAX_DOUBLINGS) -> LambdaStarResult:
    """Double ``lam`` from ``2^-5`` until the fit is within ``epsilon`` of its limit.

    The limit ``beta(inf)`` is the minimum-L1 feasible point.  The stopping
    test uses the Euclidean distance between the most recent fit and that
    limit; ``epsilon`` defaults to ``1e-4 * (1 + ||beta(inf)||)``.
    """
    cfg = cfg or SolverConfig()
    beta_inf = solve_min_l1_feasible(spec, cfg)
    if epsilon is None:
        epsilon = 1e-4 * (1.0 + float(np.linalg.norm(beta_inf)))
    if not epsilon > 0:
        raise PreconditionError("epsilon must be positive")
    grid, betas = [], []
    lam = START_LAMBDA
    warm = None
    for _ in range(max_doublings + 1):
        fit = solve_csclasso(spec.with_lambda(lam), _with_warm(cfg, warm))
        if fit.status is Status.INFEASIBLE:
            raise InfeasibleError(f"constraint set reported empty at lambda = {lam:g}")
        grid.append(lam)
        betas.append(fit.beta)
        warm = fit.beta
        if np.linalg.norm(fit.beta - beta_inf) <= epsilon:
            return LambdaStarResult(lambda_star=lam, grid=np.array(grid), betas=np.array(betas),
                                    beta_inf=beta_inf, epsilon=float(epsilon))
        lam *= 2.0
    raise BudgetExceededError(
        f"no stabilization within {max_doublings} doublings (lambda = {grid[-1]:g}); "
        f"epsilon = {epsilon:g} may be too small")


def build_lambda_grid(lambda_star, count=50, scale="linear", visited=None) -> np.ndarray:
    """Grid from 0 to ``lambda_star`` inclusive.

    ``linear`` spaces ``count`` points evenly.  ``doubling`` returns
    ``0, 2^-5, 2^-4, ...`` up to ``lambda_star`` (the points visited by the
    doubling search, or ``visited`` when given); ``count`` is ignored.
    """
    lambda_star = float(lambda_star)
    if not lambda_star > 0:
        raise PreconditionError("lambda_star must be positive")
    if scale == "linear":
        if count < 2:
            raise PreconditionError("count must be at least 2")
        return np.linspace(0.0, lambda_star, int(count))
    if scale == "doubling":
        if visited is not None:
            pts = [float(v) for v in visited if 0 < v <= lambda_star]
        else:
            pts, v = [], START_LAMBDA
            while v < lambda_star * (1 - 1e-12):
                pts.append(v)
                v *= 2.0
        if not pts or pts[-1] != lambda_star:
            pts.append(lambda_star)
        return np.array([0.0] + pts)
    raise ValueError(f"unknown grid scale {scale!r}")


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise PreconditionError("empty lambda grid")
    if np.any(~np.isfinite(grid)) or np.any(grid < 0):
        raise PreconditionError("lambda grid must be finite and nonnegative")
    if np.any(np.diff(grid) <= 0):
        raise PreconditionError("lambda grid must be strictly increasing")
    return grid


def solve_path(spec: ProblemSpec, grid, cfg: SolverConfig = None) -> PathResult:
    """Solve at every ``lam`` in ``grid``, warm-starting from the previous point.

    A failed point is recorded through its status; the path always completes.
    Infeasible points do not seed the next warm start.
    """
    cfg = cfg or SolverConfig()
    grid = _check_grid(grid)
    fits = []
    warm = cfg.warm_start
    for lam in grid:
        fit = solve_csclasso(spec.with_lambda(lam), _with_warm(cfg, warm))
        fits.append(fit)
        if fit.status is not Status.INFEASIBLE:
            warm = fit.beta
    return PathResult(lambdas=grid, betas=np.array([f.beta for f in fits]),
                      objectives=np.array([f.objective for f in fits]),
                      statuses=tuple(f.status for f in fits), fits=tuple(fits))


def _heatmap_row(args):
    data, lambda_axis, tau, baseline, penalty, cfg = args
    thr = thresholds_from_tau(data, tau, baseline=baseline, check=False).thresholds
    spec = ProblemSpec(data=data, lam=0.0, thresholds=thr, penalty=penalty)
    # the constraint set does not depend on lambda: one infeasible cell settles the row
    first = solve_csclasso(spec.with_lambda(lambda_axis[0]), cfg)
    if first.status is Status.INFEASIBLE:
        return None
    path = solve_path(spec, lambda_axis, _with_warm(cfg, first.beta))
    return path.betas, [s.value for s in path.statuses]


def heatmap_grid(data: GroupedDataset, lambda_axis, tau_axis, baseline="global",
                 penalty=None, cfg: SolverConfig = None, jobs=1) -> HeatmapGrid:
    """Fits over a ``lambda x tau`` grid with ``f_l = (1 + tau) MSE_l(ols)``.

    Rows of fixed ``tau`` are warm-started along ``lambda`` and may run in
    parallel (``jobs > 1``); results do not depend on ``jobs``.
    """
    cfg = cfg or SolverConfig()
    lambda_axis = _check_grid(lambda_axis)
    tau_axis = np.asarray(tau_axis, dtype=float).ravel()
    if tau_axis.size == 0 or np.any(np.diff(tau_axis) <= 0):
        raise PreconditionError("tau axis must be nonempty and strictly increasing")
    tasks = [(data, lambda_axis, float(t), baseline, penalty, cfg) for t in tau_axis]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_heatmap_row, tasks))
    else:
        rows = [_heatmap_row(t) for t in tasks]
    G, T = len(lambda_axis), len(tau_axis)
    cube = np.full((G, T, data.p + 1), np.nan)
    mask = np.ones((G, T), dtype=bool)
    statuses = np.full((G, T), Status.INFEASIBLE.value, dtype=object)
    for k, row in enumerate(rows):
        if row is None:
            continue
        betas, sts = row
        cube[:, k, :] = betas
        statuses[:, k] = sts
        mask[:, k] = [s == Status.INFEASIBLE.value for s in sts]
        cube[mask[:, k], k, :] = np.nan
    return HeatmapGrid(lambda_axis=lambda_axis, tau_axis=tau_axis, beta_cube=cube,
                       infeasible_mask=mask, statuses=statuses)


def default_axes(data: GroupedDataset, n_lambda=50, n_tau=50, lambda_max=None,
                 baseline="global", cfg: SolverConfig = None):
    """Default heat-map axes.

    ``lambda`` spans ``[0, lambda_max]`` (the plain-Lasso saturation point
    when not given); ``tau`` spans ``[tau_min + TAU_MIN_MARGIN, max_lambda
    tau_max(lambda) + 2]`` with the maximum taken over the ``lambda`` axis.
    """
    if lambda_max is None:
        lambda_max = lasso_lambda_star(data)
    lambda_axis = np.linspace(0.0, float(lambda_max), int(n_lambda))
    tau_lo = compute_tau_min(data, baseline=baseline, cfg=cfg) + TAU_MIN_MARGIN
    tau_hi = max(compute_tau_max(data, lam, baseline=baseline) for lam in lambda_axis) + 2.0
    return lambda_axis, np.linspace(tau_lo, tau_hi, int(n_tau))
