"""Threshold construction and feasibility boundaries.

Thresholds are tied to a baseline fit:

* ``tau`` form: ``f_l = (1 + tau) * MSE_l(ols)``, a tolerated worsening
  relative to least squares;
* ``gamma`` form: ``f_l = (1 - gamma) * MSE_l(lasso(lam))``, a demanded
  improvement over the plain Lasso at the same ``lam``.

``tau_min`` is the smallest ``tau`` whose constraint set is nonempty, and
``gamma_max`` the largest feasible ``gamma``.  Both come from the epigraph
problem ``min_beta max_l MSE_l(beta) / b_l - 1``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _auglag
from .baselines import group_mse, solve_lasso_cd, solve_ols
from .exceptions import DegenerateBaselineError, InvalidGammaError
from .model import GroupedDataset, SolverConfig, Status

DEGENERATE_MSE = 1e-12
BASELINES = ("global", "per_group")


@dataclass(frozen=True, eq=False)
class ThresholdReport:
    """Threshold vector together with the baseline it was derived from.

    ``baseline`` is ``"ols"``, ``"ols_per_group"`` or ``"lasso"``; ``lam`` is
    only meaningful for the Lasso baseline.  ``feasibility_bound`` holds
    ``tau_min`` (OLS baselines) or ``gamma_max`` (Lasso baseline), or NaN when
    it was not computed.
    """

    baseline: str
    baseline_mse: np.ndarray
    tau_or_gamma: float
    thresholds: np.ndarray
    feasibility_bound: float = float("nan")
    lam: Optional[float] = None

    @property
    def feasible(self):
        """Whether the requested level is on the feasible side of the bound."""
        if np.isnan(self.feasibility_bound):
            return None
        if self.baseline == "lasso":
            return self.tau_or_gamma <= self.feasibility_bound
        return self.tau_or_gamma >= self.feasibility_bound

    def to_dict(self):
        return {
            "baseline": self.baseline,
            "lambda": None if self.lam is None else float(self.lam),
            "baseline_mse": [float(v) for v in self.baseline_mse],
            "tau_or_gamma": float(self.tau_or_gamma),
            "thresholds": [float(v) for v in self.thresholds],
            "feasibility_bound": float(self.feasibility_bound),
        }


def _check_baseline(mse):
    mse = np.asarray(mse, dtype=float)
    bad = np.flatnonzero(mse <= DEGENERATE_MSE)
    if len(bad):
        raise DegenerateBaselineError(
            f"baseline MSE is zero for group(s) {[int(b) for b in bad]}; ratios are undefined")
    return mse


def ols_baseline_mse(data: GroupedDataset, baseline="global"):
    """Group MSEs of the least-squares baseline.

    ``global`` evaluates one OLS fit on the objective rows at every group;
    ``per_group`` uses each group's own OLS fit (its minimum attainable MSE).
    """
    if baseline not in BASELINES:
        raise ValueError(f"baseline must be one of {BASELINES}, got {baseline!r}")
    if baseline == "global":
        mse = group_mse(data, solve_ols(data))
    else:
        mse = np.empty(data.n_groups)
        for l in range(data.n_groups):
            yl, Xl = data.group_data(l)
            mse[l] = _auglag.QuadForm(Xl, yl).minimum()
    return _check_baseline(mse)


def lasso_baseline_mse(data: GroupedDataset, lam):
    return _check_baseline(group_mse(data, solve_lasso_cd(data, lam).beta))


def _min_max_ratio(data, base_mse, cfg=None):
    """``min_beta max_l MSE_l(beta) / base_mse_l - 1`` via the epigraph program."""
    cfg = cfg or SolverConfig()
    cons = []
    for l in range(data.n_groups):
        yl, Xl = data.group_data(l)
        cons.append(_auglag.Constraint(quad=_auglag.QuadForm(Xl, yl), scale=1.0 / base_mse[l],
                                       const=-1.0))
    prog = _auglag.Program(dim=data.p + 1, constraints=cons, weight=0.0, lam=0.0)
    # start from the best candidate among the global and groupwise least-squares fits
    starts = [solve_ols(data)]
    for l in range(data.n_groups):
        yl, Xl = data.group_data(l)
        starts.append(np.linalg.lstsq(Xl, yl, rcond=None)[0])
    x0 = min(starts, key=lambda b: float(np.max(prog.cons_values(b))))
    z, res = _auglag.min_max_violation(prog, x0, cfg)
    if res.status is not Status.CONVERGED:
        warnings.warn(f"epigraph solve ended with status {res.status.value}; "
                      "feasibility bound may be inaccurate", RuntimeWarning, stacklevel=3)
    # the optimal z equals the largest constraint value at the returned point
    return float(np.max(prog.cons_values(res.x[:data.p + 1]))) if data.n_groups else z


def compute_tau_min(data: GroupedDataset, baseline="global", cfg: SolverConfig = None) -> float:
    """Smallest ``tau`` for which ``f_l = (1 + tau) MSE_l(ols)`` is feasible.

    Negative values mean every group can beat its baseline MSE at once.
    """
    if data.n_groups == 0:
        raise ValueError("dataset has no groups")
    return _min_max_ratio(data, ols_baseline_mse(data, baseline), cfg)


def compute_tau_max(data: GroupedDataset, lam, baseline="global") -> float:
    """``max_l MSE_l(lasso(lam)) / MSE_l(ols) - 1``.

    For ``tau`` at or above this value the constraints are inactive at the
    Lasso solution, so the constrained fit coincides with it.
    """
    if data.n_groups == 0:
        raise ValueError("dataset has no groups")
    base = ols_baseline_mse(data, baseline)
    lasso = group_mse(data, solve_lasso_cd(data, lam).beta)
    return float(np.max(lasso / base) - 1.0)


def compute_gamma_max(data: GroupedDataset, lam, cfg: SolverConfig = None) -> float:
    """Largest ``gamma`` for which ``f_l = (1 - gamma) MSE_l(lasso(lam))`` is feasible."""
    if data.n_groups == 0:
        raise ValueError("dataset has no groups")
    return -_min_max_ratio(data, lasso_baseline_mse(data, lam), cfg)


def thresholds_from_tau(data: GroupedDataset, tau, baseline="global", check=True,
                        cfg: SolverConfig = None) -> ThresholdReport:
    """``f_l = (1 + tau) * MSE_l(ols)``.

    With ``check`` set, ``tau_min`` is computed and a warning is issued when
    ``tau`` lies below it (the solver will then report infeasibility).
    """
    base = ols_baseline_mse(data, baseline)
    tau = float(tau)
    bound = float("nan")
    if check:
        bound = _min_max_ratio(data, base, cfg)
        if tau < bound:
            warnings.warn(f"tau = {tau:g} is below tau_min = {bound:g}; "
                          "the constraint set is empty", UserWarning, stacklevel=2)
    tag = "ols" if baseline == "global" else "ols_per_group"
    return ThresholdReport(baseline=tag, baseline_mse=base, tau_or_gamma=tau,
                           thresholds=(1.0 + tau) * base, feasibility_bound=bound)


def thresholds_from_gamma(data: GroupedDataset, lam, gamma, check=True,
                          cfg: SolverConfig = None) -> ThresholdReport:
    """``f_l = (1 - gamma) * MSE_l(lasso(lam))`` for ``0 <= gamma < 1``."""
    gamma = float(gamma)
    if not (0.0 <= gamma < 1.0):
        raise InvalidGammaError(f"gamma must lie in [0, 1), got {gamma:g}")
    base = lasso_baseline_mse(data, lam)
    bound = float("nan")
    if check:
        bound = -_min_max_ratio(data, base, cfg)
        if gamma > bound:
            warnings.warn(f"gamma = {gamma:g} exceeds gamma_max = {bound:g}; "
                          "the constraint set is empty", UserWarning, stacklevel=2)
    return ThresholdReport(baseline="lasso", baseline_mse=base, tau_or_gamma=gamma,
                           thresholds=(1.0 - gamma) * base, feasibility_bound=bound,
                           lam=float(lam))
