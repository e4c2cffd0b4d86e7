"""Ordinary least squares and plain Lasso baselines.

The Lasso here always uses the ``(0 | I)`` penalty (intercept unpenalized)
and is solved by cyclic coordinate descent on the covariance form, with the
intercept profiled out by centering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ZERO_TOL, GroupedDataset


@dataclass(frozen=True, eq=False)
class LassoFit:
    beta: np.ndarray
    objective: float
    nz_count: int
    iterations: int
    converged: bool = True
    objective_trace: tuple = field(default=(), repr=False)


def solve_ols(data: GroupedDataset) -> np.ndarray:
    """Least-squares fit on the objective rows.

    Falls back to the minimum-norm minimizer (SVD) when ``X`` is rank
    deficient.
    """
    y0, X0 = data.objective_data()
    beta, *_ = np.linalg.lstsq(X0, y0, rcond=None)
    return beta


def _centered_moments(y, X):
    n = len(y)
    xbar = X[:, 1:].mean(axis=0)
    ybar = y.mean()
    Xc = X[:, 1:] - xbar
    yc = y - ybar
    gram = Xc.T @ Xc / n
    corr = Xc.T @ yc / n
    return gram, corr, xbar, ybar


def _soft(z, t):
    return np.sign(z) * max(abs(z) - t, 0.0)


def lasso_objective(y, X, beta, lam):
    r = y - X @ beta
    return float(r @ r) / len(y) + lam * float(np.sum(np.abs(beta[1:])))


def solve_lasso_cd(data: GroupedDataset, lam: float, *, tol=1e-10, max_sweeps=100000,
                   warm_start=None, trace=False) -> LassoFit:
    """Minimize ``(1/n)||y - X b||^2 + lam * sum_{j>=1} |b_j|`` by coordinate descent.

    Sweeps alternate between the full coordinate set and the current active
    set; convergence is declared when a full sweep moves no coordinate by
    more than ``tol``.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    y0, X0 = data.objective_data()
    gram, corr, xbar, ybar = _centered_moments(y0, X0)
    p = gram.shape[0]
    diag = np.diag(gram).copy()
    half = 0.5 * lam

    b = np.zeros(p) if warm_start is None else np.array(warm_start[1:], dtype=float)
    # resid_corr = corr - gram @ b, i.e. -(1/2) of the smooth gradient
    rc = corr - gram @ b
    history = []

    def objective():
        bb = np.concatenate([[ybar - xbar @ b], b])
        return lasso_objective(y0, X0, bb, lam)

    def sweep(coords):
        biggest = 0.0
        for j in coords:
            d = diag[j]
            if d <= 0.0:
                new = 0.0
            else:
                new = _soft(rc[j] + d * b[j], half) / d
            delta = new - b[j]
            if delta != 0.0:
                rc[:] -= gram[:, j] * delta
                b[j] = new
                biggest = max(biggest, abs(delta))
        return biggest

    sweeps = 0
    converged = False
    everything = np.arange(p)
    while sweeps < max_sweeps:
        change = sweep(everything)
        sweeps += 1
        if trace:
            history.append(objective())
        if change <= tol:
            converged = True
            break
        while sweeps < max_sweeps:
            active = np.flatnonzero(b)
            if len(active) == 0:
                break
            change = sweep(active)
            sweeps += 1
            if trace:
                history.append(objective())
            if change <= tol:
                break

    beta = np.concatenate([[ybar - xbar @ b], b])
    return LassoFit(
        beta=beta,
        objective=lasso_objective(y0, X0, beta, lam),
        nz_count=int(np.sum(np.abs(b) > ZERO_TOL)),
        iterations=sweeps,
        converged=converged,
        objective_trace=tuple(history),
    )


def lasso_lambda_star(data: GroupedDataset) -> float:
    """Smallest ``lam`` at which every penalized Lasso coefficient is zero.

    With the intercept unpenalized it is profiled out first, giving
    ``|| (2/n) X_pen' (y - ybar) ||_inf``.
    """
    y0, X0 = data.objective_data()
    n = len(y0)
    return float(np.max(np.abs(2.0 / n * X0[:, 1:].T @ (y0 - y0.mean()))))


def kkt_check_lasso(data: GroupedDataset, lam: float, beta, zero_tol=ZERO_TOL) -> float:
    """Sup-norm violation of the Lasso subgradient optimality condition."""
    y0, X0 = data.objective_data()
    beta = np.asarray(beta, dtype=float)
    r = 2.0 / len(y0) * X0.T @ (y0 - X0 @ beta)
    viol = [abs(r[0])]
    pen = r[1:]
    b = beta[1:]
    nz = np.abs(b) > zero_tol
    if np.any(nz):
        viol.append(np.max(np.abs(pen[nz] - lam * np.sign(b[nz]))))
    if np.any(~nz):
        viol.append(np.max(np.maximum(np.abs(pen[~nz]) - lam, 0.0)))
    return float(max(viol))


def group_mse(data: GroupedDataset, beta) -> np.ndarray:
    """``MSE_l(beta)`` for every group of ``data``."""
    out = np.empty(data.n_groups)
    for l in range(data.n_groups):
        yl, Xl = data.group_data(l)
        r = yl - Xl @ beta
        out[l] = float(r @ r) / len(yl)
    return out
