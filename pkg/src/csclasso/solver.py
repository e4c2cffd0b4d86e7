"""Cost-sensitive constrained Lasso solver.

Solves::

    min_beta  (1/n0)||y0 - X0 beta||^2 + lam ||A beta||_1
    s.t.      (1/n_l)||y_l - X_l beta||^2 <= f_l,   l = 1..L

with the augmented-Lagrangian engine in :mod:`csclasso._auglag`, plus the
``lam -> inf`` limit (minimum ``||A beta||_1`` over the feasible set) and
independent KKT residual checks.
"""

from __future__ import annotations

import time

import numpy as np

from . import _auglag
from .exceptions import InfeasibleError, PreconditionError
from .model import (ZERO_TOL, AugLagState, FitResult, ProblemSpec, SolverConfig, Status,
                    validate_problem)

# weight of the least-squares tie-break in the minimum-L1 problem
_MIN_L1_TIEBREAK = 1e-9


def _require_valid(spec):
    outcome = validate_problem(spec)
    if not outcome.ok:
        raise PreconditionError("invalid problem: " + "; ".join(outcome.violations))


def _default_start(spec):
    y0, _ = spec.data.objective_data()
    beta = np.zeros(spec.data.p + 1)
    beta[0] = y0.mean()
    return beta


def _constraints(spec):
    cons = []
    for l, f in enumerate(spec.thresholds):
        yl, Xl = spec.data.group_data(l)
        cons.append(_auglag.Constraint(quad=_auglag.QuadForm(Xl, yl), scale=1.0 / f,
                                       const=-1.0, unit=float(f)))
    return cons


def _groupwise_infeasible(spec, cons, cfg):
    """True when some single constraint cannot be met even by its own OLS fit."""
    for c, f in zip(cons, spec.thresholds):
        if c.quad.minimum() - f > max(cfg.tol_feas, 1e-12 * f):
            return True
    return False


def _program(spec, cons, objective_weight, lam, rho0, stat_unit):
    y0, X0 = spec.data.objective_data()
    pen = spec.penalty
    return _auglag.Program(
        dim=spec.data.p + 1, constraints=cons, objective=_auglag.QuadForm(X0, y0),
        weight=objective_weight, lam=lam, A=None if pen.is_identity else pen.A,
        identity=pen.is_identity, rho0=rho0, stat_unit=stat_unit)


def _finish(spec, res, prog, cfg, started, lam_reported, objective_fn=None):
    beta = res.x[:spec.data.p + 1].copy()
    eta = _auglag.user_multipliers(prog, res.eta) if spec.n_constraints else np.zeros(0)
    eta = np.maximum(eta, 0.0)
    if objective_fn is None:
        stat, feas, comp = kkt_residual_csclasso(spec, beta, eta)
        objective = spec.objective_value(beta)
    else:
        stat, feas, comp = objective_fn(beta, eta)
        objective = spec.penalty.l1(beta)
    status = res.status
    if status is not Status.INFEASIBLE:
        ok = stat <= cfg.tol_stat and feas <= cfg.tol_feas and comp <= cfg.tol_stat
        status = Status.CONVERGED if ok else Status.MAX_ITER
    fit = FitResult(beta=beta, objective=objective, group_mse=spec.group_mse(beta),
                    multipliers=eta, kkt_stationarity=stat, kkt_feasibility=feas,
                    kkt_complementarity=comp, iterations_outer=res.outer,
                    iterations_inner=res.inner, status=status, lam=lam_reported,
                    seconds=time.perf_counter() - started,
                    state=AugLagState(beta=beta, eta=eta, rho=res.rho, w=res.w,
                                      dual_u=res.dual_u))
    return fit


def _infeasible_result(spec, start, cfg, started, lam):
    stat, feas, comp = kkt_residual_csclasso(spec, start, np.zeros(spec.n_constraints))
    return FitResult(beta=start, objective=spec.objective_value(start),
                     group_mse=spec.group_mse(start), multipliers=np.zeros(spec.n_constraints),
                     kkt_stationarity=stat, kkt_feasibility=feas, kkt_complementarity=comp,
                     iterations_outer=0, iterations_inner=0, status=Status.INFEASIBLE,
                     lam=lam, seconds=time.perf_counter() - started)


def solve_csclasso(spec: ProblemSpec, cfg: SolverConfig = None) -> FitResult:
    """Fit the constrained Lasso described by ``spec``.

    ``status`` is ``converged`` only when the KKT residuals, recomputed from
    the raw data, are within ``cfg.tol_stat`` (stationarity, complementary
    slackness) and ``cfg.tol_feas`` (constraint violation).
    """
    cfg = cfg or SolverConfig()
    started = time.perf_counter()
    _require_valid(spec)
    start = (np.array(cfg.warm_start, dtype=float) if cfg.warm_start is not None
             else _default_start(spec))
    cons = _constraints(spec)
    if cons and _groupwise_infeasible(spec, cons, cfg):
        return _infeasible_result(spec, start, cfg, started, spec.lam)

    # Internal scaling keeps the objective O(1) for large lam.
    s = 1.0 / (1.0 + spec.lam)
    fscale = float(np.mean(spec.thresholds)) if cons else 1.0
    prog = _program(spec, cons, objective_weight=s, lam=s * spec.lam,
                    rho0=10.0 * s * fscale, stat_unit=1.0 / s)
    res = _auglag.solve(prog, start, None, cfg)
    return _finish(spec, res, prog, cfg, started, spec.lam)


def kkt_residual_csclasso(spec: ProblemSpec, beta, eta):
    """``(stationarity, feasibility, complementarity)`` at ``(beta, eta)``.

    Evaluated directly from the data: the stationarity entry is the sup-norm
    distance from zero to the Lagrangian subdifferential.
    """
    beta = np.asarray(beta, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0):
        raise PreconditionError("multipliers must be nonnegative")
    y0, X0 = spec.data.objective_data()
    grad = -2.0 / len(y0) * (X0.T @ (y0 - X0 @ beta))
    slack = np.empty(spec.n_constraints)
    for l in range(spec.n_constraints):
        yl, Xl = spec.data.group_data(l)
        r = yl - Xl @ beta
        grad -= eta[l] * 2.0 / len(yl) * (Xl.T @ r)
        slack[l] = float(r @ r) / len(yl) - spec.thresholds[l]
    pen = spec.penalty
    probe = _auglag.Program(dim=len(beta), constraints=[], lam=spec.lam,
                            A=None if pen.is_identity else pen.A, identity=pen.is_identity)
    stat = _auglag.stationarity_distance(probe, beta, grad)
    if spec.n_constraints:
        feas = float(np.max(np.maximum(slack, 0.0)))
        comp = float(np.max(np.abs(eta * slack)))
    else:
        feas = comp = 0.0
    return stat, feas, comp


def solve_min_l1_feasible(spec: ProblemSpec, cfg: SolverConfig = None, *, return_result=False):
    """Minimum ``||A beta||_1`` over the constraint set (the ``lam -> inf`` limit).

    Directions the penalty does not see (the intercept, for ``A = (0 | I)``)
    are fixed by a vanishing least-squares tie-break, which selects the limit
    of the regularization path.  ``spec.lam`` is ignored.

    Raises :class:`InfeasibleError` when the constraint set looks empty
    (unless ``return_result`` is set, in which case the status says so).
    """
    cfg = cfg or SolverConfig()
    started = time.perf_counter()
    spec = spec.with_lambda(1.0)
    _require_valid(spec)
    start = (np.array(cfg.warm_start, dtype=float) if cfg.warm_start is not None
             else _default_start(spec))
    cons = _constraints(spec)
    if cons and _groupwise_infeasible(spec, cons, cfg):
        fit = _infeasible_result(spec, start, cfg, started, np.inf)
    else:
        y0, _ = spec.data.objective_data()
        q_ref = max(float(np.var(y0)), 1e-12)
        weight = _MIN_L1_TIEBREAK / q_ref
        prog = _program(spec, cons, objective_weight=weight, lam=1.0, rho0=10.0, stat_unit=1.0)

        def residual_fn(beta, eta):
            return _min_l1_residuals(spec, beta, eta, weight)

        res = _auglag.solve(prog, start, None, cfg)
        fit = _finish(spec, res, prog, cfg, started, np.inf, objective_fn=residual_fn)
    if return_result:
        return fit
    if fit.status is Status.INFEASIBLE:
        raise InfeasibleError("constraint set appears empty")
    return fit.beta


def _min_l1_residuals(spec, beta, eta, weight):
    y0, X0 = spec.data.objective_data()
    grad = -weight * 2.0 / len(y0) * (X0.T @ (y0 - X0 @ beta))
    slack = np.empty(spec.n_constraints)
    for l in range(spec.n_constraints):
        yl, Xl = spec.data.group_data(l)
        r = yl - Xl @ beta
        grad -= eta[l] * 2.0 / len(yl) * (Xl.T @ r)
        slack[l] = float(r @ r) / len(yl) - spec.thresholds[l]
    pen = spec.penalty
    probe = _auglag.Program(dim=len(beta), constraints=[], lam=1.0,
                            A=None if pen.is_identity else pen.A, identity=pen.is_identity)
    stat = _auglag.stationarity_distance(probe, beta, grad)
    if spec.n_constraints:
        return stat, float(np.max(np.maximum(slack, 0.0))), float(np.max(np.abs(eta * slack)))
    return stat, 0.0, 0.0


def prop1_stationarity_residual(spec: ProblemSpec, fit: FitResult, zero_tol=ZERO_TOL) -> float:
    """Residual of the single-constraint stationarity system.

    Checks ``(2/n0) X0'(y0 - X0 b) + (2/n1) eta X1'(y1 - X1 b) = v`` where
    ``v_0 = 0`` and, for ``s >= 1``, ``v_s = lam * sign(b_s)`` when ``b_s != 0``
    and ``v_s`` in ``[-lam, lam]`` otherwise.
    """
    if spec.n_constraints != 1:
        raise PreconditionError("exactly one constraint required, got "
                                f"{spec.n_constraints}")
    if not spec.penalty.is_identity:
        raise PreconditionError("penalty must be (0 | I)")
    beta = np.asarray(fit.beta, dtype=float)
    eta = float(fit.multipliers[0])
    lam = spec.lam
    y0, X0 = spec.data.objective_data()
    y1, X1 = spec.data.group_data(0)
    lhs = (2.0 / len(y0)) * X0.T @ (y0 - X0 @ beta) + (2.0 / len(y1)) * eta * X1.T @ (y1 - X1 @ beta)
    worst = abs(lhs[0])
    for s in range(1, len(beta)):
        if beta[s] > zero_tol:
            worst = max(worst, abs(lhs[s] - lam))
        elif beta[s] < -zero_tol:
            worst = max(worst, abs(lhs[s] + lam))
        else:
            worst = max(worst, abs(lhs[s]) - lam)
    return float(max(worst, 0.0))
